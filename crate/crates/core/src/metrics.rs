//! Peak detection on AoA spectra, angular peak matching and the F1 / mean
//! angle error / mean power error scores.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::tracer::{el_az_direction, AoASpectrum};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub el_deg: f64,
    pub az_deg: f64,
    /// W
    pub power: f64,
}

impl Peak {
    pub fn direction(&self) -> Vec3 {
        el_az_direction(self.el_deg, self.az_deg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub k: usize,
    /// Side of the square max-filter neighbourhood, in cells.
    pub window: usize,
    /// Peaks weaker than the global max by more than this are dropped.
    pub floor_db: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            k: 10,
            window: 5,
            floor_db: 30.0,
        }
    }
}

fn wraps_in_azimuth(az: &[f64]) -> bool {
    if az.len() < 2 {
        return false;
    }
    let step = az[1] - az[0];
    (az[az.len() - 1] - az[0] + step - 360.0).abs() < 1e-6
}

/// Local maxima of a max filter above the floor, strongest first. Equal
/// powers keep row-major (elevation, azimuth) order.
pub fn detect_peaks(spec: &AoASpectrum, p: &PeakParams) -> Vec<Peak> {
    if p.k == 0 || spec.values.is_empty() {
        return Vec::new();
    }
    let (n_el, n_az) = (spec.n_el(), spec.n_az());
    let wrap = wraps_in_azimuth(&spec.grid.az_deg);
    let half = (p.window.max(1) / 2) as isize;
    let max = spec.max();
    let floor = max * 10f64.powf(-p.floor_db / 10.0);
    let mut found = Vec::new();
    for i in 0..n_el {
        for j in 0..n_az {
            let v = spec.at(i, j);
            if !(v > 0.0) || v < floor {
                continue;
            }
            let mut is_max = true;
            'win: for di in -half..=half {
                let ii = i as isize + di;
                if ii < 0 || ii >= n_el as isize {
                    continue;
                }
                for dj in -half..=half {
                    let mut jj = j as isize + dj;
                    if wrap {
                        jj = jj.rem_euclid(n_az as isize);
                    } else if jj < 0 || jj >= n_az as isize {
                        continue;
                    }
                    if spec.at(ii as usize, jj as usize) > v {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                found.push((i * n_az + j, v));
            }
        }
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    found.truncate(p.k);
    found
        .into_iter()
        .map(|(c, v)| Peak {
            el_deg: spec.grid.el_deg[c / n_az],
            az_deg: spec.grid.az_deg[c % n_az],
            power: v,
        })
        .collect()
}

/// Great-circle angle between two peaks, degrees.
pub fn angular_distance_deg(a: &Peak, b: &Peak) -> f64 {
    let (u, v) = (a.direction(), b.direction());
    u.cross(v).norm().atan2(u.dot(v)).to_degrees()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Repeatedly pair the closest remaining peaks.
    #[default]
    Greedy,
    /// Most pairs within the radius, then least total distance.
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub distance_deg: f64,
    pub power_error_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub n_pred: usize,
    pub n_gt: usize,
    pub n_matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean angle error over matches; `None` without matches.
    pub aae_deg: Option<f64>,
    /// Mean absolute power error over matches.
    pub ape_db: Option<f64>,
}

fn pair(pred: &[Peak], gt: &[Peak], i: usize, j: usize) -> MatchedPair {
    MatchedPair {
        pred: i,
        gt: j,
        distance_deg: angular_distance_deg(&pred[i], &gt[j]),
        power_error_db: (10.0 * (pred[i].power / gt[j].power).log10()).abs(),
    }
}

/// Index pairs `(pred, gt)` no farther apart than `radius_deg`.
pub fn match_peaks(pred: &[Peak], gt: &[Peak], radius_deg: f64, mode: Matching) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in pred.iter().enumerate() {
        for (j, b) in gt.iter().enumerate() {
            let d = angular_distance_deg(a, b);
            if d <= radius_deg {
                cand.push((d, i, j));
            }
        }
    }
    match mode {
        Matching::Greedy => {
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let (mut up, mut ug) = (vec![false; pred.len()], vec![false; gt.len()]);
            let mut out = Vec::new();
            for (_, i, j) in cand {
                if !up[i] && !ug[j] {
                    up[i] = true;
                    ug[j] = true;
                    out.push((i, j));
                }
            }
            out
        }
        Matching::Optimal => {
            let n = pred.len().max(gt.len());
            // Any in-radius pair is cheaper than any number of distances,
            // so the count of pairs is maximised first.
            let big = 1e3 * (radius_deg.max(1.0)) * (n as f64 + 1.0);
            let mut cost = vec![vec![big; n]; n];
            for &(d, i, j) in &cand {
                cost[i][j] = d;
            }
            let assign = hungarian(&cost);
            let mut out: Vec<(usize, usize)> = assign
                .into_iter()
                .enumerate()
                .filter(|&(i, j)| i < pred.len() && j < gt.len() && cost[i][j] < big)
                .collect();
            out.sort_unstable();
            out
        }
    }
}

/// Minimum-cost perfect assignment on a square matrix; returns the column
/// of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials and matching with 1-based sentinel column 0.
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row[p[j] - 1] = j - 1;
        }
    }
    row
}

pub fn score(pairs: &[(usize, usize)], pred: &[Peak], gt: &[Peak]) -> MatchReport {
    let pairs: Vec<MatchedPair> = pairs.iter().map(|&(i, j)| pair(pred, gt, i, j)).collect();
    let m = pairs.len();
    let ratio = |n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
    let (precision, recall) = (ratio(pred.len()), ratio(gt.len()));
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let mean = |f: fn(&MatchedPair) -> f64| (m > 0).then(|| pairs.iter().map(f).sum::<f64>() / m as f64);
    let unmatched = |n: usize, used: Vec<usize>| (0..n).filter(|k| !used.contains(k)).collect();
    MatchReport {
        unmatched_pred: unmatched(pred.len(), pairs.iter().map(|p| p.pred).collect()),
        unmatched_gt: unmatched(gt.len(), pairs.iter().map(|p| p.gt).collect()),
        n_pred: pred.len(),
        n_gt: gt.len(),
        n_matched: m,
        precision,
        recall,
        f1,
        aae_deg: mean(|p| p.distance_deg),
        ape_db: mean(|p| p.power_error_db),
        pairs,
    }
}

/// Detect, match and score in one go.
pub fn evaluate(
    pred: &AoASpectrum,
    gt: &AoASpectrum,
    peaks: &PeakParams,
    radius_deg: f64,
    mode: Matching,
) -> (MatchReport, Vec<Peak>, Vec<Peak>) {
    let (pp, gp) = (detect_peaks(pred, peaks), detect_peaks(gt, peaks));
    let pairs = match_peaks(&pp, &gp, radius_deg, mode);
    (score(&pairs, &pp, &gp), pp, gp)
}

/// `<stem>.json` with the summary and `<stem>_pairs.csv` with one row per
/// matched pair.
pub fn write_report(stem: &Path, report: &MatchReport, pred: &[Peak], gt: &[Peak]) -> std::io::Result<()> {
    let summary = serde_json::json!({
        "f1": report.f1,
        "aae_deg": report.aae_deg,
        "ape_db": report.ape_db,
        "precision": report.precision,
        "recall": report.recall,
        "n_pred": report.n_pred,
        "n_gt": report.n_gt,
        "n_matched": report.n_matched,
    });
    std::fs::write(
        stem.with_extension("json"),
        serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)? + "\n",
    )?;
    let name = format!("{}_pairs.csv", stem.file_name().and_then(|s| s.to_str()).unwrap_or("metrics"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(stem.with_file_name(name))?);
    writeln!(f, "pred_el_deg,pred_az_deg,pred_power_w,gt_el_deg,gt_az_deg,gt_power_w,distance_deg,power_error_db")?;
    for p in &report.pairs {
        let (a, b) = (&pred[p.pred], &gt[p.gt]);
        writeln!(
            f,
            "{},{},{:e},{},{},{:e},{},{}",
            a.el_deg, a.az_deg, a.power, b.el_deg, b.az_deg, b.power, p.distance_deg, p.power_error_db
        )?;
    }
    f.flush()
}

#[cfg(test)]
mod tests;
