use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CalibError, Target};
use crate::antenna::Pose;
use crate::math::Vec3;
use crate::tracer::{read_spectrum_csv, write_spectrum_csv, AngleGrid, AoASpectrum};

/// Position plus either a look-at target or a boresight direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresight: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
}

impl PoseSpec {
    pub fn looking_at(position: Vec3, target: Vec3) -> Self {
        Self {
            position: position.to_array(),
            target: Some(target.to_array()),
            boresight: None,
            up: None,
        }
    }

    /// Round-trips through [`PoseSpec::pose`] for any orthonormal pose.
    pub fn from_pose(p: &Pose) -> Self {
        Self {
            position: p.position.to_array(),
            target: None,
            boresight: Some(p.rotation.col(2).to_array()),
            up: Some(p.rotation.col(1).to_array()),
        }
    }

    pub fn pose(&self) -> Result<Pose, String> {
        let p = Vec3::from_array(self.position);
        let up = self.up.map_or(Vec3::Z, Vec3::from_array);
        let dir = match (self.target, self.boresight) {
            (Some(t), None) => Vec3::from_array(t) - p,
            (None, Some(b)) => Vec3::from_array(b),
            (None, None) => return Ok(Pose::at(p)),
            (Some(_), Some(_)) => return Err("give either target or boresight, not both".into()),
        };
        if !(dir.norm() > 0.0) || !p.is_finite() {
            return Err("degenerate pose".into());
        }
        Ok(Pose::look_at(p, dir, up))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasuredSpectrum {
    Grid(AoASpectrum),
    /// `(azimuth deg, power dBm)` at a fixed elevation.
    Sparse { el_deg: f64, scan: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub rx_pose: Pose,
    pub tx_pose: Pose,
    pub spectrum: MeasuredSpectrum,
}

impl Measurement {
    pub fn target(&self, grid: &AngleGrid) -> Result<Target, CalibError> {
        match &self.spectrum {
            MeasuredSpectrum::Grid(s) => {
                if &s.grid != grid {
                    return Err(CalibError::GridMismatch);
                }
                Ok(Target::full(s))
            }
            MeasuredSpectrum::Sparse { el_deg, scan } => Target::sparse(grid, *el_deg, scan),
        }
    }
}

#[derive(Deserialize)]
struct MeasurementFile {
    rx_pose: PoseSpec,
    tx_pose: PoseSpec,
    #[serde(default)]
    spectrum_csv_path: Option<PathBuf>,
    #[serde(default)]
    sparse: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    sparse_el_deg: f64,
}

fn is_sidecar(p: &Path) -> bool {
    if !p.with_extension("csv").exists() {
        return false;
    }
    let v: Option<serde_json::Value> = std::fs::read_to_string(p).ok().and_then(|t| serde_json::from_str(&t).ok());
    !v.is_some_and(|v| v.get("rx_pose").is_some())
}

/// Every `*.json` file in `dir`, in file-name order. Sidecars of spectrum
/// CSVs (`x.json` next to `x.csv` without an `rx_pose`) are skipped.
pub fn load_dataset(dir: &Path) -> Result<Vec<Measurement>, CalibError> {
    let err = |m: String| CalibError::Dataset(format!("{}: {m}", dir.display()));
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| err(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !is_sidecar(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CalibError::NoData);
    }
    files
        .iter()
        .map(|f| {
            let ferr = |m: String| CalibError::Dataset(format!("{}: {m}", f.display()));
            let text = std::fs::read_to_string(f).map_err(|e| ferr(e.to_string()))?;
            let m: MeasurementFile = serde_json::from_str(&text).map_err(|e| ferr(e.to_string()))?;
            let spectrum = match (m.spectrum_csv_path, m.sparse) {
                (Some(p), None) => {
                    let p = if p.is_relative() { dir.join(p) } else { p };
                    MeasuredSpectrum::Grid(read_spectrum_csv(&p).map_err(ferr)?)
                }
                (None, Some(s)) => MeasuredSpectrum::Sparse {
                    el_deg: m.sparse_el_deg,
                    scan: s.into_iter().map(|[a, p]| (a, p)).collect(),
                },
                _ => return Err(ferr("need exactly one of spectrum_csv_path or sparse".into())),
            };
            Ok(Measurement {
                rx_pose: m.rx_pose.pose().map_err(ferr)?,
                tx_pose: m.tx_pose.pose().map_err(ferr)?,
                spectrum,
            })
        })
        .collect()
}

/// Write `meas_NN.json` plus `meas_NN_spectrum.csv` per measurement,
/// readable by [`load_dataset`].
pub fn write_dataset(dir: &Path, data: &[Measurement]) -> Result<(), CalibError> {
    let err = |p: &Path, e: &dyn std::fmt::Display| CalibError::Dataset(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| err(dir, &e))?;
    for (i, m) in data.iter().enumerate() {
        let mut doc = serde_json::json!({
            "rx_pose": PoseSpec::from_pose(&m.rx_pose),
            "tx_pose": PoseSpec::from_pose(&m.tx_pose),
        });
        match &m.spectrum {
            MeasuredSpectrum::Grid(s) => {
                let name = format!("meas_{i:02}_spectrum.csv");
                let p = dir.join(&name);
                let meta = serde_json::json!({ "measurement": format!("meas_{i:02}.json") });
                write_spectrum_csv(&p, s, &meta).map_err(|e| err(&p, &e))?;
                doc["spectrum_csv_path"] = name.into();
            }
            MeasuredSpectrum::Sparse { el_deg, scan } => {
                doc["sparse_el_deg"] = (*el_deg).into();
                doc["sparse"] = scan.iter().map(|&(a, p)| vec![a, p]).collect::<Vec<_>>().into();
            }
        }
        let p = dir.join(format!("meas_{i:02}.json"));
        let text = serde_json::to_string_pretty(&doc).expect("json value serializes");
        std::fs::write(&p, text + "\n").map_err(|e| err(&p, &e))?;
    }
    Ok(())
}
