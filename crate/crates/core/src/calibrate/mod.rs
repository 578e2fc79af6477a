//! Loss, optimizer and calibration loops for material fields and rigid
//! geometry offsets.

mod data;
mod grad;
mod train;

pub use data::{load_dataset, write_dataset, Measurement, MeasuredSpectrum, PoseSpec};
pub use grad::{frozen_loss, loss_and_gradient, LossGradient, ParamMode, RigidOffset};
pub use train::{
    calibrate_geometry, calibrate_materials, calibrate_materials_with, GeometryCalibration, GeometryTrainConfig, MaterialCalibration,
    MaterialTrainConfig,
};

use thiserror::Error;

use crate::math::Real;
use crate::tracer::{AngleGrid, AoASpectrum, TraceError};

/// Powers are clamped to this level (W) before taking logs.
pub const POWER_FLOOR: f64 = 1e-15;

/// Log ratios below this count as an exact match.
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("loss needs at least one compared cell")]
    EmptySupport,
    #[error("spectra are on different grids")]
    GridMismatch,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("loss diverged at step {step}: {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("no measurements")]
    NoData,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn floored_ln<R: Real>(p: R) -> R {
    if p.val() > POWER_FLOOR {
        p.ln()
    } else {
        R::cst(POWER_FLOOR.ln())
    }
}

/// Mean absolute difference of natural-log powers over the compared cells.
pub fn log_mae<R: Real>(pred: &[R], meas: &[f64]) -> Result<R, CalibError> {
    log_mae_offset(pred, meas, 0.0)
}

/// `log_mae` after adding `offset` (W) to both sides, which bounds the
/// slope of the log near nulls of the prediction.
pub fn log_mae_offset<R: Real>(pred: &[R], meas: &[f64], offset: f64) -> Result<R, CalibError> {
    if pred.len() != meas.len() {
        return Err(CalibError::Length(pred.len(), meas.len()));
    }
    if pred.is_empty() {
        return Err(CalibError::EmptySupport);
    }
    let mut acc = R::zero();
    for (p, m) in pred.iter().zip(meas) {
        let d = floored_ln(*p + offset) - floored_ln(*m + offset);
        // Zero subgradient at a match, up to rounding.
        if d.val().abs() > MATCH_TOL {
            acc = acc + d.abs();
        }
    }
    Ok(acc * (1.0 / pred.len() as f64))
}

pub fn log_mae_spectra(pred: &AoASpectrum, meas: &AoASpectrum) -> Result<f64, CalibError> {
    if pred.grid != meas.grid {
        return Err(CalibError::GridMismatch);
    }
    log_mae(&pred.values, &meas.values)
}

/// Compared cells of a spectrum with their measured powers.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub grid: AngleGrid,
    pub cells: Vec<usize>,
    /// W
    pub values: Vec<f64>,
    /// Added to both spectra before the log (W); zero for the plain loss.
    pub offset: f64,
}

impl Target {
    pub fn full(spec: &AoASpectrum) -> Self {
        Self {
            grid: spec.grid.clone(),
            cells: (0..spec.values.len()).collect(),
            values: spec.values.clone(),
            offset: 0.0,
        }
    }

    /// Cells within `range_db` of the spectrum's peak.
    pub fn within_range(spec: &AoASpectrum, range_db: f64) -> Result<Self, CalibError> {
        let floor = spec.max() * 10f64.powf(-range_db / 10.0);
        let cells: Vec<usize> = (0..spec.values.len()).filter(|&i| spec.values[i] >= floor).collect();
        if cells.is_empty() || !(spec.max() > 0.0) {
            return Err(CalibError::EmptySupport);
        }
        Ok(Self {
            grid: spec.grid.clone(),
            values: cells.iter().map(|&i| spec.values[i]).collect(),
            cells,
            offset: 0.0,
        })
    }

    /// Sparse azimuth scan at the elevation nearest to `el_deg`; powers in dBm.
    pub fn sparse(grid: &AngleGrid, el_deg: f64, scan: &[(f64, f64)]) -> Result<Self, CalibError> {
        if scan.is_empty() {
            return Err(CalibError::EmptySupport);
        }
        let nearest = |axis: &[f64], v: f64, dist: &dyn Fn(f64, f64) -> f64| {
            (0..axis.len())
                .min_by(|&a, &b| dist(axis[a], v).total_cmp(&dist(axis[b], v)))
                .expect("non-empty axis")
        };
        let plain = |a: f64, b: f64| (a - b).abs();
        let wrapped = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        let i = nearest(&grid.el_deg, el_deg, &plain);
        let mut cells = Vec::with_capacity(scan.len());
        let mut values = Vec::with_capacity(scan.len());
        for &(az, dbm) in scan {
            let j = nearest(&grid.az_deg, az, &wrapped);
            cells.push(i * grid.az_deg.len() + j);
            values.push(10f64.powf((dbm - 30.0) / 10.0));
        }
        Ok(Self {
            grid: grid.clone(),
            cells,
            values,
            offset: 0.0,
        })
    }

    /// Set the offset `range_db` below the strongest compared cell.
    pub fn with_offset_db(mut self, range_db: f64) -> Self {
        let peak = self.values.iter().copied().fold(0.0, f64::max);
        self.offset = peak * 10f64.powf(-range_db / 10.0);
        self
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One update in place. Non-finite gradients leave everything untouched.
pub fn adam_step(params: &mut [f64], grads: &[f64], st: &mut AdamState) -> Result<(), CalibError> {
    if params.len() != grads.len() || st.m.len() != params.len() {
        return Err(CalibError::Length(params.len(), grads.len()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(CalibError::NonFiniteGradient { step: st.step });
    }
    st.step += 1;
    let t = st.step as i32;
    let (c1, c2) = (1.0 - st.beta1.powi(t), 1.0 - st.beta2.powi(t));
    for i in 0..params.len() {
        let g = grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        let mh = st.m[i] / c1;
        let vh = st.v[i] / c2;
        params[i] -= st.lr * mh / (vh.sqrt() + st.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests;
