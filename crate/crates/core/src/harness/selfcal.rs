//! Synthetic calibration studies on the 1 m plate: data generated with a
//! known scene and recovered by the calibration loops.

use std::sync::Arc;

use super::scenes::reflector_endpoints;
use super::HarnessError;
use crate::antenna::{AntennaPattern, ArrayGeometry, Pose};
use crate::calibrate::{log_mae_spectra, Measurement, MeasuredSpectrum, Target};
use crate::geometry::{build_accel, TriangleMesh};
use crate::materials::{MaterialField, RadioMaterial};
use crate::math::Vec3;
use crate::metrics::{evaluate, Matching, MatchReport, PeakParams};
use crate::tracer::{simulate, AngleGrid, Endpoint, MaterialSource, RaySampling, SceneConfig, SPEED_OF_LIGHT};

pub const PLATE_DISTANCE: f64 = 1.5;

/// Unit plate at the origin as object 0.
pub fn unit_plate() -> TriangleMesh {
    let h = 0.5;
    let v = vec![
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![0, 0])
        .expect("valid plate")
        .0
}

/// Plate scene with a single-element transmitter and a 4 x 4 receive
/// array, both facing the plate centre at 45 degrees.
pub fn plate_scene(materials: MaterialSource, rays: usize, seed: u64) -> SceneConfig {
    let lambda = SPEED_OF_LIGHT / 28e9;
    let (tx, rx) = reflector_endpoints(PLATE_DISTANCE, PLATE_DISTANCE, 45.0);
    SceneConfig {
        accel: Arc::new(build_accel(unit_plate())),
        materials,
        tx: Endpoint::single(Pose::look_at(tx, -tx, Vec3::Z), AntennaPattern::IsotropicV, lambda),
        rx: Endpoint::with_array(
            Pose::look_at(rx, -rx, Vec3::Z),
            AntennaPattern::IsotropicV,
            ArrayGeometry::default_ura(lambda),
        ),
        freq: 28e9,
        rays,
        max_depth: 1,
        seed,
        tx_power: 1.0,
        include_los: false,
        sampling: RaySampling::Lattice,
    }
}

pub fn truth_material(alpha_r: f64) -> RadioMaterial {
    RadioMaterial {
        eps_r: 4.0,
        sigma: 0.05,
        s: 0.3,
        xpd: 0.1,
        alpha_r,
    }
}

/// `n` receiver poses on a 1.5 m shell over the plate (azimuth -50..50,
/// elevation 35..55 degrees, scrambled), all facing the plate centre, each
/// paired with the transmitter pose of [`plate_scene`].
pub fn calibration_poses(n: usize) -> Vec<(Pose, Pose)> {
    let d = PLATE_DISTANCE;
    let last = (n.max(2) - 1) as f64;
    let (tx, _) = reflector_endpoints(d, d, 45.0);
    let tx = Pose::look_at(tx, -tx, Vec3::Z);
    (0..n)
        .map(|i| {
            let az = (-50.0 + 100.0 * i as f64 / last).to_radians();
            let el = (35.0 + 20.0 * ((i * 7) % n) as f64 / last).to_radians();
            let p = Vec3::new(d * el.cos() * az.cos(), d * el.cos() * az.sin(), d * el.sin());
            (tx, Pose::look_at(p, -p, Vec3::Z))
        })
        .collect()
}

/// Spectra of `base` at each pose; pose `i` uses seed `seed + i`.
pub fn synthesize(
    base: &SceneConfig,
    poses: &[(Pose, Pose)],
    grid: &AngleGrid,
    seed: u64,
) -> Result<Vec<Measurement>, HarnessError> {
    poses
        .iter()
        .enumerate()
        .map(|(i, (tx, rx))| {
            let mut c = base.clone();
            c.tx.pose = *tx;
            c.rx.pose = *rx;
            c.seed = seed + i as u64;
            let (_, _, spec) = simulate(&c, grid)?;
            Ok(Measurement {
                rx_pose: *rx,
                tx_pose: *tx,
                spectrum: MeasuredSpectrum::Grid(spec),
            })
        })
        .collect()
}

pub fn with_field(base: &SceneConfig, field: MaterialField, alpha_r: f64) -> SceneConfig {
    let mut c = base.clone();
    c.materials = MaterialSource::Field {
        field: Arc::new(field),
        alpha_r,
    };
    c
}

#[derive(Clone, Debug)]
pub struct HeldOutScore {
    pub log_mae: f64,
    /// Strongest peak of the prediction against that of the measurement.
    pub top1: MatchReport,
}

/// Predict every gridded measurement with `cfg` and score it.
pub fn score_measurements(
    cfg: &SceneConfig,
    data: &[Measurement],
    grid: &AngleGrid,
    seed: u64,
) -> Result<Vec<HeldOutScore>, HarnessError> {
    let top1 = PeakParams {
        k: 1,
        ..Default::default()
    };
    data.iter()
        .enumerate()
        .map(|(i, m)| {
            let MeasuredSpectrum::Grid(meas) = &m.spectrum else {
                return Err(HarnessError::Config("scoring needs gridded spectra".into()));
            };
            let mut c = cfg.clone();
            c.tx.pose = m.tx_pose;
            c.rx.pose = m.rx_pose;
            c.seed = seed + i as u64;
            let (_, _, pred) = simulate(&c, grid)?;
            Ok(HeldOutScore {
                log_mae: log_mae_spectra(&pred, meas)?,
                top1: evaluate(&pred, meas, &top1, 20.0, Matching::Greedy).0,
            })
        })
        .collect()
}

/// Reference for geometry recovery: cells within 30 dB of the peak.
pub fn geometry_reference(cfg: &SceneConfig, grid: &AngleGrid) -> Result<Target, HarnessError> {
    let (_, _, spec) = simulate(cfg, grid)?;
    Ok(Target::within_range(&spec, 30.0)?)
}
