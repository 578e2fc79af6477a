use std::io::Write;
use std::path::Path;

use super::{AngleGrid, AoASpectrum};

/// Sidecar path: `x.csv` -> `x.json`.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

/// First row: `el_deg/az_deg,<az...>`; then one row per elevation. Values in W.
pub fn write_spectrum_csv(path: &Path, spec: &AoASpectrum, meta: &serde_json::Value) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["el_deg/az_deg".to_string()];
    head.extend(spec.grid.az_deg.iter().map(|a| format!("{a}")));
    w.write_record(&head)?;
    for (i, el) in spec.grid.el_deg.iter().enumerate() {
        let mut row = vec![format!("{el}")];
        row.extend((0..spec.n_az()).map(|j| format!("{:e}", spec.at(i, j))));
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut f = std::fs::File::create(sidecar_path(path))?;
    writeln!(f, "{}", serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_spectrum_csv(path: &Path) -> Result<AoASpectrum, String> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = r.records();
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{}: bad number {s:?}: {e}", path.display()));
    let head = rows
        .next()
        .ok_or_else(|| format!("{}: empty spectrum file", path.display()))?
        .map_err(|e| e.to_string())?;
    let az_deg = head.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?;
    let mut el_deg = Vec::new();
    let mut values = Vec::new();
    for rec in rows {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != az_deg.len() + 1 {
            return Err(format!("{}: ragged row", path.display()));
        }
        el_deg.push(parse(&rec[0])?);
        for v in rec.iter().skip(1) {
            let v = parse(v)?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{}: negative or non-finite power", path.display()));
            }
            values.push(v);
        }
    }
    let increasing = |a: &[f64]| a.windows(2).all(|w| w[1] > w[0]);
    if el_deg.is_empty() || !increasing(&el_deg) || !increasing(&az_deg) {
        return Err(format!("{}: axes must be non-empty and strictly increasing", path.display()));
    }
    Ok(AoASpectrum {
        grid: AngleGrid { el_deg, az_deg },
        values,
    })
}
