//! Experiment drivers, scene builders and output files behind the CLI.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod scenes;
pub mod selfcal;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibrate::CalibError;
use crate::tracer::{AoASpectrum, TraceError};

pub use config::{LoadedScene, Overrides, SceneFile};
pub use experiments::{reflector_deviation, DeviationRow, ExperimentSpec, ReflectorCase, SweepAxis};
pub use scenes::{build_scene, write_obj, BuiltScene, SceneKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad input: configuration, missing files, unreadable datasets.
    #[error("{0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Calib(CalibError),
}

impl From<CalibError> for HarnessError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::NoData | CalibError::Dataset(_) | CalibError::GridMismatch => Self::Config(e.to_string()),
            CalibError::Trace(t) => Self::Trace(t),
            e => Self::Calib(e),
        }
    }
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }

    /// 2 for configuration and file problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Trace(TraceError::Config(_)) => 2,
            Self::Trace(_) | Self::Calib(_) => 1,
        }
    }
}

/// Write `value` as pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Sidecar next to a CSV: `x.csv` -> `x.json`.
pub fn write_sidecar(csv: &Path, meta: &serde_json::Value) -> Result<(), HarnessError> {
    write_json(&csv.with_extension("json"), meta)
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Polar map of a hemisphere spectrum: zenith in the centre, horizon on the
/// rim, azimuth counter-clockwise from +x to the right. Grey levels span
/// `range_db` below the peak.
pub fn render_polar_png(path: &Path, spec: &AoASpectrum, size: u32, range_db: f64) -> Result<(), HarnessError> {
    let max = spec.max();
    let half = size as f64 / 2.0;
    let el_step = spec.grid.el_deg.get(1).map_or(1.0, |e| e - spec.grid.el_deg[0]);
    let az_step = spec.grid.az_deg.get(1).map_or(1.0, |a| a - spec.grid.az_deg[0]);
    let img = image::GrayImage::from_fn(size, size, |px, py| {
        let x = (px as f64 + 0.5 - half) / half;
        let y = (half - py as f64 - 0.5) / half;
        let r = x.hypot(y);
        if r > 1.0 || !(max > 0.0) {
            return image::Luma([0]);
        }
        let el = 90.0 * (1.0 - r);
        let az = y.atan2(x).to_degrees();
        let i = ((el - spec.grid.el_deg[0]) / el_step).round().clamp(0.0, (spec.n_el() - 1) as f64) as usize;
        let j = ((az - spec.grid.az_deg[0]) / az_step).round().rem_euclid(spec.n_az() as f64) as usize;
        let db = 10.0 * (spec.at(i, j.min(spec.n_az() - 1)) / max).max(1e-30).log10();
        let level = ((db + range_db) / range_db).clamp(0.0, 1.0);
        image::Luma([(level * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| HarnessError::io(path, e))
}
