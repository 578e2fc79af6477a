use std::sync::Arc;

use super::*;
use crate::antenna::{AntennaPattern, ArrayGeometry, Pose};
use crate::autodiff::finite_diff_check_with;
use crate::geometry::test_meshes::square;
use crate::geometry::build_accel;
use crate::materials::{MaterialField, RadioMaterial};
use crate::math::Vec3;
use crate::tracer::{simulate, Endpoint, MaterialSource, RaySampling, SceneConfig, SPEED_OF_LIGHT};
use approx::assert_relative_eq;
use proptest::prelude::*;

const F28: f64 = 28e9;
const E: f64 = std::f64::consts::E;

#[test]
fn log_mae_examples() {
    let meas = [1e-9, 2e-8, 3e-10, 4e-7];
    assert_eq!(log_mae(&meas, &meas).unwrap(), 0.0);
    let scaled: Vec<f64> = meas.iter().map(|m| m * E).collect();
    assert_relative_eq!(log_mae(&scaled, &meas).unwrap(), 1.0, epsilon = 1e-12);
    let half = [meas[0] * E, meas[1] * E, meas[2], meas[3]];
    assert_relative_eq!(log_mae(&half, &meas).unwrap(), 0.5, epsilon = 1e-12);
}

#[test]
fn log_mae_errors_and_floor() {
    assert!(matches!(log_mae::<f64>(&[], &[]), Err(CalibError::EmptySupport)));
    assert!(matches!(log_mae(&[1.0], &[1.0, 2.0]), Err(CalibError::Length(1, 2))));
    // Both below the floor compare equal.
    assert_eq!(log_mae(&[0.0], &[1e-20]).unwrap(), 0.0);
    let l = log_mae(&[0.0], &[1e-15 * E]).unwrap();
    assert_relative_eq!(l, 1.0, epsilon = 1e-9);
}

proptest! {
    #[test]
    fn log_mae_symmetric(a in prop::collection::vec(1e-12f64..1.0, 1..20), seed in 0u64..1000) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * (1.0 + ((i as u64 * 7 + seed) % 13) as f64)).collect();
        let ab = log_mae(&a, &b).unwrap();
        let ba = log_mae(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }

    #[test]
    fn log_mae_scale_invariant(a in prop::collection::vec(1e-10f64..1.0, 1..20), c in 1e-3f64..1e3) {
        let b: Vec<f64> = a.iter().rev().cloned().collect();
        let l0 = log_mae(&a, &b).unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * c).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * c).collect();
        let l1 = log_mae(&sa, &sb).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-9 * (1.0 + l0));
    }

    #[test]
    fn adam_zero_lr_is_identity(p in prop::collection::vec(-10.0f64..10.0, 1..10), g in -5.0f64..5.0) {
        let mut q = p.clone();
        let mut st = AdamState::new(p.len(), 0.0);
        adam_step(&mut q, &vec![g; p.len()], &mut st).unwrap();
        prop_assert_eq!(q, p);
        prop_assert_eq!(st.step, 1);
    }
}

#[test]
fn adam_examples() {
    let mut p = vec![1.0, -2.0, 0.5];
    let mut st = AdamState::new(3, 0.01);
    adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
    assert_eq!(p, vec![1.0, -2.0, 0.5]);
    assert_eq!(st.step, 1);

    let g = [3.0, -0.2, 1e-3];
    let mut p = vec![0.0; 3];
    let mut st = AdamState::new(3, 0.01);
    adam_step(&mut p, &g, &mut st).unwrap();
    let first = p.clone();
    for (d, gi) in first.iter().zip(&g) {
        assert_relative_eq!(*d, -0.01 * gi.signum(), max_relative = 1e-4);
    }
    adam_step(&mut p, &g, &mut st).unwrap();
    for i in 0..3 {
        assert!((p[i] - first[i]).abs() <= first[i].abs() + 1e-15);
    }
}

#[test]
fn adam_rejects_bad_input() {
    let mut p = vec![1.0, 2.0];
    let mut st = AdamState::new(2, 0.1);
    let before = (p.clone(), st.clone());
    assert!(matches!(
        adam_step(&mut p, &[f64::NAN, 0.0], &mut st),
        Err(CalibError::NonFiniteGradient { step: 0 })
    ));
    assert_eq!((p.clone(), st.clone()), before);
    assert!(matches!(adam_step(&mut p, &[1.0], &mut st), Err(CalibError::Length(2, 1))));
}

#[test]
fn sparse_target_snaps_to_grid() {
    let grid = AngleGrid::hemisphere(10.0);
    let t = Target::sparse(&grid, 4.0, &[(0.0, -50.0), (358.0, -60.0), (-14.0, -30.0)]).unwrap();
    let n_az = grid.az_deg.len();
    let az0 = grid.az_deg.iter().position(|&a| a == 0.0).unwrap();
    let el0 = grid.el_deg.iter().position(|&e| e == 0.0).unwrap();
    assert_eq!(t.cells[0], el0 * n_az + az0);
    assert_eq!(t.cells[1], t.cells[0]);
    let j = t.cells[2] % n_az;
    let d = (grid.az_deg[j] + 10.0).rem_euclid(360.0);
    assert!(d.min(360.0 - d) < 1e-9);
    assert_relative_eq!(t.values[0], 1e-8, max_relative = 1e-12);
    assert_relative_eq!(t.values[2], 1e-6, max_relative = 1e-12);
    assert!(Target::sparse(&grid, 0.0, &[]).is_err());
}

#[test]
fn range_target_keeps_strong_cells() {
    let grid = AngleGrid::hemisphere(30.0);
    let mut values = vec![1e-12; grid.len()];
    values[3] = 1.0;
    values[5] = 2e-3;
    values[7] = 5e-4;
    let spec = crate::tracer::AoASpectrum { grid, values };
    let t = Target::within_range(&spec, 30.0).unwrap();
    assert_eq!(t.cells, vec![3, 5]);
    assert_eq!(t.values, vec![1.0, 2e-3]);
    let zero = crate::tracer::AoASpectrum {
        grid: spec.grid.clone(),
        values: vec![0.0; spec.values.len()],
    };
    assert!(Target::within_range(&zero, 30.0).is_err());
}

fn rx_array() -> ArrayGeometry {
    let lambda = SPEED_OF_LIGHT / F28;
    ArrayGeometry::ura(2, 2, lambda / 2.0, lambda)
}

fn plate_scene(materials: MaterialSource, rays: usize) -> SceneConfig {
    let lambda = SPEED_OF_LIGHT / F28;
    let tx = Vec3::new(-0.5, 0.1, 0.5);
    let rx = Vec3::new(0.6, -0.1, 0.45);
    SceneConfig {
        accel: Arc::new(build_accel(square(Vec3::ZERO, 0.6))),
        materials,
        tx: Endpoint::single(Pose::at(tx), AntennaPattern::IsotropicV, lambda),
        rx: Endpoint::with_array(Pose::look_at(rx, -rx, Vec3::Z), AntennaPattern::IsotropicV, rx_array()),
        freq: F28,
        rays,
        max_depth: 1,
        seed: 3,
        tx_power: 1.0,
        include_los: false,
        sampling: RaySampling::Lattice,
    }
}

fn field_scene(seed: u64, rays: usize) -> SceneConfig {
    plate_scene(
        MaterialSource::Field {
            field: Arc::new(MaterialField::new(seed)),
            alpha_r: 4.0,
        },
        rays,
    )
}

#[test]
fn material_gradient_matches_finite_differences() {
    let grid = AngleGrid::hemisphere(15.0);
    let (_, _, reference) = simulate(&field_scene(11, 3000), &grid).unwrap();
    let target = Target::full(&reference);
    let cfg = field_scene(5, 3000);
    let paths = crate::tracer::trace_paths(&cfg).unwrap();
    assert!(!paths.is_empty());
    let lg = loss_and_gradient(&cfg, &paths, &target, ParamMode::Material).unwrap();
    let x = match &cfg.materials {
        MaterialSource::Field { field, .. } => field.params().to_vec(),
        _ => unreachable!(),
    };
    assert_eq!(lg.grad.len(), x.len());
    let l0 = frozen_loss(&cfg, &paths, &target, ParamMode::Material, &x).unwrap();
    assert_relative_eq!(l0, lg.loss, max_relative = 1e-12);

    // Probe the twenty largest gradient entries, spread over all layers.
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| lg.grad[*b].abs().total_cmp(&lg.grad[*a].abs()));
    let coords: Vec<usize> = idx.into_iter().take(20).collect();
    let f = |p: &[f64]| frozen_loss(&cfg, &paths, &target, ParamMode::Material, p).unwrap();
    let rep = finite_diff_check_with(f, &lg.grad, &x, &coords, 1e-6).unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn geometry_gradient_matches_finite_differences() {
    let grid = AngleGrid::hemisphere(15.0);
    let cfg = plate_scene(MaterialSource::Table(vec![RadioMaterial::conductor(4.0)]), 3000);
    let rest = square(Vec3::ZERO, 0.6);
    let mut truth = RigidOffset::new(0, Vec3::ZERO);
    truth.params = [0.03, -0.02, 0.01, 0.05, -0.04, 0.0];
    let mut rcfg = cfg.clone();
    rcfg.accel = Arc::new(build_accel(truth.apply(&rest)));
    let (_, _, reference) = simulate(&rcfg, &grid).unwrap();
    let target = Target::full(&reference);

    let rig = RigidOffset::new(0, Vec3::ZERO);
    let paths = crate::tracer::trace_paths(&cfg).unwrap();
    let lg = loss_and_gradient(&cfg, &paths, &target, ParamMode::Geometry(&rig)).unwrap();
    assert_eq!(lg.grad.len(), 6);
    let f = |p: &[f64]| frozen_loss(&cfg, &paths, &target, ParamMode::Geometry(&rig), p).unwrap();
    let rep = finite_diff_check_with(f, &lg.grad, &rig.params, &[0, 1, 2, 3, 4], 1e-6).unwrap();
    assert!(rep.max_rel_error < 1e-4, "{rep:?}");
}

#[test]
fn rigid_offset_moves_only_its_object() {
    let a = square(Vec3::ZERO, 1.0);
    let mut b = square(Vec3::new(0.0, 0.0, 2.0), 1.0);
    b.object_id = vec![1, 1];
    let mesh = crate::geometry::TriangleMesh::merged(&[a.clone(), b.clone()]);
    let mut rig = RigidOffset::new(0, Vec3::ZERO);
    rig.params = [0.1, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2];
    let moved = rig.apply(&mesh);
    assert_relative_eq!(moved.vertices[0].x, 0.6, epsilon = 1e-12);
    assert_relative_eq!(moved.vertices[0].y, -0.5, epsilon = 1e-12);
    for i in 4..8 {
        assert_eq!(moved.vertices[i], mesh.vertices[i]);
    }
    assert_relative_eq!(moved.face_normals[0].z, 1.0, epsilon = 1e-12);
}

#[test]
fn zero_epochs_returns_initial_field() {
    let cfg = field_scene(2, 500);
    let grid = AngleGrid::hemisphere(15.0);
    let (_, _, spec) = simulate(&cfg, &grid).unwrap();
    let data = vec![Measurement {
        rx_pose: cfg.rx.pose,
        tx_pose: cfg.tx.pose,
        spectrum: MeasuredSpectrum::Grid(spec),
    }];
    let tc = MaterialTrainConfig {
        epochs: 0,
        grid,
        ..Default::default()
    };
    let out = calibrate_materials(&cfg, &data, &tc).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.field.params(), MaterialField::new(2).params());
    assert!(matches!(calibrate_materials(&cfg, &[], &tc), Err(CalibError::NoData)));
}

#[test]
fn short_training_reduces_loss() {
    let grid = AngleGrid::hemisphere(15.0);
    let truth = plate_scene(MaterialSource::Table(vec![RadioMaterial::conductor(4.0)]), 2000);
    let rx = [Vec3::new(0.6, -0.1, 0.45), Vec3::new(0.4, 0.3, 0.6), Vec3::new(0.5, -0.4, 0.5)];
    let data: Vec<Measurement> = rx
        .iter()
        .map(|&p| {
            let mut c = truth.clone();
            c.rx.pose = Pose::look_at(p, -p, Vec3::Z);
            let (_, _, spec) = simulate(&c, &grid).unwrap();
            Measurement {
                rx_pose: c.rx.pose,
                tx_pose: c.tx.pose,
                spectrum: MeasuredSpectrum::Grid(spec),
            }
        })
        .collect();
    let cfg = field_scene(9, 2000);
    let tc = MaterialTrainConfig {
        epochs: 8,
        lr: 5e-3,
        seed: 1,
        grid,
        offset_db: Some(30.0),
        final_lr_ratio: 1.0,
    };
    let out = calibrate_materials(&cfg, &data, &tc).unwrap();
    assert_eq!(out.history.len(), 8);
    assert!(out.history.last().unwrap() < &out.history[0], "{:?}", out.history);
}

#[test]
fn geometry_at_rest_stays_put() {
    let grid = AngleGrid::hemisphere(15.0);
    let cfg = plate_scene(MaterialSource::Table(vec![RadioMaterial::conductor(4.0)]), 2000);
    let rest = square(Vec3::ZERO, 0.6);
    let (_, _, reference) = simulate(&cfg, &grid).unwrap();
    let target = Target::full(&reference);
    let tc = GeometryTrainConfig {
        iters: 5,
        ..Default::default()
    };
    let out = calibrate_geometry(&cfg, &rest, &RigidOffset::new(0, Vec3::ZERO), &target, &tc).unwrap();
    assert_eq!(out.trajectory.len(), 6);
    assert!(out.losses[0] < 1e-9, "{:?}", out.losses);
    for p in &out.params {
        assert!(p.abs() < 1e-9, "{:?}", out.params);
    }
}

#[test]
fn dataset_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = AngleGrid::hemisphere(30.0);
    let cfg = plate_scene(MaterialSource::Table(vec![RadioMaterial::conductor(4.0)]), 500);
    let (_, _, spec) = simulate(&cfg, &grid).unwrap();
    crate::tracer::write_spectrum_csv(&dir.path().join("a.csv"), &spec, &serde_json::json!({})).unwrap();
    std::fs::write(
        dir.path().join("a.json"),
        r#"{"rx_pose": {"position": [0.6, -0.1, 0.45], "target": [0, 0, 0]},
            "tx_pose": {"position": [-0.5, 0.1, 0.5]},
            "spectrum_csv_path": "a.csv"}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("b.json"),
        r#"{"rx_pose": {"position": [1, 0, 0], "boresight": [-1, 0, 0]},
            "tx_pose": {"position": [0, 0, 1]},
            "sparse": [[0, -40], [45, -50]], "sparse_el_deg": 0}"#,
    )
    .unwrap();
    let data = load_dataset(dir.path()).unwrap();
    assert_eq!(data.len(), 2);
    match &data[0].spectrum {
        MeasuredSpectrum::Grid(s) => {
            assert_eq!(s.grid, spec.grid);
            for (a, b) in s.values.iter().zip(&spec.values) {
                assert_relative_eq!(*a, *b, max_relative = 1e-12);
            }
        }
        _ => panic!("expected grid spectrum"),
    }
    assert!(data[0].target(&grid).is_ok());
    assert!(matches!(data[0].target(&AngleGrid::hemisphere(10.0)), Err(CalibError::GridMismatch)));
    assert_eq!(data[1].target(&grid).unwrap().cells.len(), 2);

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(empty.path()), Err(CalibError::NoData)));
    std::fs::write(empty.path().join("bad.json"), r#"{"rx_pose": {"position": [0,0,0]}}"#).unwrap();
    assert!(matches!(load_dataset(empty.path()), Err(CalibError::Dataset(_))));
}
