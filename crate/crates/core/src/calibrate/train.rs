use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{loss_and_gradient, ParamMode, RigidOffset};
use super::{adam_step, AdamState, CalibError, Measurement, Target};
use crate::geometry::{build_accel, TriangleMesh};
use crate::materials::MaterialField;
use crate::tracer::{trace_paths, AngleGrid, MaterialSource, SceneConfig};

#[derive(Clone, Debug)]
pub struct MaterialTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Drives per-step ray streams and the visiting order.
    pub seed: u64,
    pub grid: AngleGrid,
    /// Training compares `log(P + offset)` with the offset this far below
    /// each target's peak; `None` trains on the plain loss.
    pub offset_db: Option<f64>,
    /// Learning rate after the last epoch as a fraction of `lr`, reached by
    /// per-epoch exponential decay. 1 keeps it constant.
    pub final_lr_ratio: f64,
}

impl Default for MaterialTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 5e-4,
            seed: 0,
            grid: AngleGrid::default(),
            offset_db: Some(30.0),
            final_lr_ratio: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaterialCalibration {
    pub field: MaterialField,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One measurement per step; fresh ray streams every step.
pub fn calibrate_materials(
    base: &SceneConfig,
    data: &[Measurement],
    tc: &MaterialTrainConfig,
) -> Result<MaterialCalibration, CalibError> {
    calibrate_materials_with(base, data, tc, |_, _, _| Ok(()))
}

/// As [`calibrate_materials`], calling `on_epoch(epoch, field, mean loss)`
/// after every epoch.
pub fn calibrate_materials_with(
    base: &SceneConfig,
    data: &[Measurement],
    tc: &MaterialTrainConfig,
    mut on_epoch: impl FnMut(usize, &MaterialField, f64) -> Result<(), CalibError>,
) -> Result<MaterialCalibration, CalibError> {
    let (mut field, alpha_r) = match &base.materials {
        MaterialSource::Field { field, alpha_r } => ((**field).clone(), *alpha_r),
        MaterialSource::Table(_) => return Err(CalibError::Dataset("scene has no material field".into())),
    };
    if data.is_empty() {
        return Err(CalibError::NoData);
    }
    if !(tc.final_lr_ratio > 0.0 && tc.final_lr_ratio.is_finite()) {
        return Err(CalibError::Dataset(format!(
            "final learning-rate ratio must be positive, got {}",
            tc.final_lr_ratio
        )));
    }
    let targets: Vec<Target> = data
        .iter()
        .map(|m| {
            let t = m.target(&tc.grid)?;
            Ok(match tc.offset_db {
                Some(db) => t.with_offset_db(db),
                None => t,
            })
        })
        .collect::<Result<_, CalibError>>()?;
    let mut adam = AdamState::new(field.n_params(), tc.lr);
    let mut params = field.params().to_vec();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut step = 0usize;
    let decay = if tc.epochs > 1 {
        tc.final_lr_ratio.powf(1.0 / (tc.epochs - 1) as f64)
    } else {
        1.0
    };
    for epoch in 0..tc.epochs {
        adam.lr = tc.lr * decay.powi(epoch as i32);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(tc.seed ^ ((epoch as u64) << 32))));
        let mut total = 0.0;
        for &i in &order {
            let mut cfg = base.clone();
            cfg.tx.pose = data[i].tx_pose;
            cfg.rx.pose = data[i].rx_pose;
            cfg.materials = MaterialSource::Field {
                field: Arc::new(field.clone()),
                alpha_r,
            };
            cfg.seed = splitmix(tc.seed.wrapping_add(step as u64 + 1));
            let paths = trace_paths(&cfg)?;
            let lg = loss_and_gradient(&cfg, &paths, &targets[i], ParamMode::Material)?;
            if !lg.loss.is_finite() {
                return Err(CalibError::Divergence { step, loss: lg.loss });
            }
            adam_step(&mut params, &lg.grad, &mut adam)?;
            field
                .set_params(&params)
                .map_err(|_| CalibError::NonFiniteGradient { step })?;
            total += lg.loss;
            step += 1;
        }
        history.push(total / data.len() as f64);
        on_epoch(epoch, &field, total / data.len() as f64)?;
    }
    Ok(MaterialCalibration { field, history })
}

#[derive(Clone, Debug)]
pub struct GeometryTrainConfig {
    pub iters: usize,
    pub lr: f64,
    /// Indices into `(tx, ty, tz, rx, ry, rz)` that are optimized.
    pub free: Vec<usize>,
}

impl Default for GeometryTrainConfig {
    fn default() -> Self {
        Self {
            iters: 200,
            lr: 0.02,
            free: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeometryCalibration {
    pub params: [f64; 6],
    /// Parameters before each iteration, then the final state.
    pub trajectory: Vec<[f64; 6]>,
    pub losses: Vec<f64>,
    pub grads: Vec<[f64; 6]>,
}

/// Recover a rigid offset by matching `reference`. The scene is retraced
/// with the same seed every iteration, so sampling noise is common to the
/// reference and the prediction.
pub fn calibrate_geometry(
    base: &SceneConfig,
    rest: &TriangleMesh,
    init: &RigidOffset,
    reference: &Target,
    tc: &GeometryTrainConfig,
) -> Result<GeometryCalibration, CalibError> {
    if tc.free.iter().any(|&i| i >= 6) {
        return Err(CalibError::Dataset("free parameter index out of range".into()));
    }
    let mut rig = init.clone();
    let mut adam = AdamState::new(tc.free.len(), tc.lr);
    let mut out = GeometryCalibration {
        params: rig.params,
        trajectory: Vec::with_capacity(tc.iters + 1),
        losses: Vec::with_capacity(tc.iters),
        grads: Vec::with_capacity(tc.iters),
    };
    for step in 0..tc.iters {
        out.trajectory.push(rig.params);
        let mut cfg = base.clone();
        cfg.accel = Arc::new(build_accel(rig.apply(rest)));
        let paths = trace_paths(&cfg)?;
        let lg = loss_and_gradient(&cfg, &paths, reference, ParamMode::Geometry(&rig))?;
        if !lg.loss.is_finite() {
            return Err(CalibError::Divergence { step, loss: lg.loss });
        }
        let g: [f64; 6] = lg.grad.clone().try_into().expect("six rigid parameters");
        out.losses.push(lg.loss);
        out.grads.push(g);
        let mut sub: Vec<f64> = tc.free.iter().map(|&i| rig.params[i]).collect();
        let gs: Vec<f64> = tc.free.iter().map(|&i| g[i]).collect();
        adam_step(&mut sub, &gs, &mut adam)?;
        for (k, &i) in tc.free.iter().enumerate() {
            rig.params[i] = sub[k];
        }
    }
    out.trajectory.push(rig.params);
    out.params = rig.params;
    Ok(out)
}
