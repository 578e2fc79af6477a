//! Command-line definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{LoadedScene, MeshSpec, Overrides};
use super::experiments::{write_deviation_csv, ExperimentSpec, SweepAxis};
use super::scenes::{build_scene, write_obj, SceneKind};
use super::selfcal::score_measurements;
use super::{ensure_dir, render_polar_png, write_json, write_sidecar, HarnessError};
use crate::calibrate::{
    calibrate_geometry, calibrate_materials_with, load_dataset, write_dataset, CalibError, GeometryTrainConfig,
    MaterialTrainConfig, Measurement, MeasuredSpectrum, PoseSpec, RigidOffset, Target,
};
use crate::materials::MaterialField;
use crate::metrics::{evaluate, write_report, Matching, PeakParams};
use crate::tracer::{read_spectrum_csv, simulate, write_spectrum_csv, MaterialSource};

#[derive(Debug, Parser)]
#[command(name = "mmtrace", version, about = "Differentiable mmWave ray tracer and calibration harness")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub rays: Option<usize>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    /// Lobe exponent applied to every material.
    #[arg(long, global = true)]
    pub alpha_r: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            rays: self.rays,
            max_depth: self.max_depth,
            alpha_r: self.alpha_r,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace a scene and write its AoA spectrum.
    Simulate {
        scene: PathBuf,
        /// JSON list of `{tx_pose, rx_pose}`; writes one measurement per pose
        /// in dataset layout instead of a single spectrum.
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        png: bool,
    },
    /// Reflector gain against the mirror path over scales and lobe exponents.
    Converge {
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0])]
        scales: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 50.0, 120.0])]
        alphas: Vec<f64>,
    },
    /// Deviation from the mirror path along one axis.
    DeviationSweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        distances: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        angles: Option<Vec<f64>>,
    },
    /// Fit a material field or a rigid offset to measurements.
    Calibrate(CalibrateArgs),
    /// Detect, match and score peaks of two spectra.
    Metrics {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 30.0)]
        floor_db: f64,
        #[arg(long, default_value_t = 20.0)]
        radius_deg: f64,
        /// Optimal assignment instead of greedy matching.
        #[arg(long)]
        optimal: bool,
    },
    /// Write a builtin mesh and a matching scene file.
    BuildScene {
        #[arg(value_enum)]
        kind: BuiltinKind,
        /// Reflector side length (m).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 25.0)]
        distance: f64,
        #[arg(long, default_value_t = 45.0)]
        incidence_deg: f64,
        /// Room size `x,y,z` (m).
        #[arg(long, value_delimiter = ',', default_values_t = [4.0, 5.0, 3.0])]
        size: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BuiltinKind {
    SingleReflector,
    BoxRoom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibMode {
    Materials,
    Geometry,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub mode: CalibMode,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Materials: passes over the training set.
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Geometry: optimizer steps.
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Defaults to 5e-4 for materials and 0.02 for geometry.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Materials: last measurements kept out of training and scored.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
    /// Materials: learning rate after the last epoch relative to the first.
    #[arg(long, default_value_t = 1.0)]
    pub final_lr_ratio: f64,
    /// Materials: offset of the training loss below each peak; negative
    /// disables it.
    #[arg(long, default_value_t = 30.0)]
    pub offset_db: f64,
    /// Grid step of the compared spectra (deg).
    #[arg(long, default_value_t = 1.0)]
    pub grid_step: f64,
    /// Geometry: object moved by the offset.
    #[arg(long, default_value_t = 0)]
    pub object: u32,
    /// Geometry: initial `tx,ty,tz,rx,ry,rz` (m, rad).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0; 6])]
    pub init: Vec<f64>,
    /// Geometry: indices of the optimized parameters.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3, 4])]
    pub free: Vec<usize>,
    /// Geometry: cells within this range of the peak are compared (dB).
    #[arg(long, default_value_t = 30.0)]
    pub range_db: f64,
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<(), HarnessError> {
    let g = &cli.global;
    ensure_dir(&g.out)?;
    match &cli.command {
        Command::Simulate { scene, poses, png } => cmd_simulate(g, scene, poses.as_deref(), *png),
        Command::Converge { scales, alphas } => {
            let spec = ExperimentSpec::converge(scales.clone(), alphas.clone(), g.rays.unwrap_or(1_000_000), g.seed.unwrap_or(0));
            run_experiment(g, &spec, "converge")
        }
        Command::DeviationSweep {
            axis,
            scales,
            alphas,
            distances,
            angles,
        } => {
            let mut spec = ExperimentSpec::sweep(*axis, g.rays.unwrap_or(1_000_000), g.seed.unwrap_or(0));
            let pick = |o: &Option<Vec<f64>>, d: &mut Vec<f64>| {
                if let Some(v) = o {
                    *d = v.clone();
                }
            };
            pick(scales, &mut spec.scales);
            pick(alphas, &mut spec.alphas);
            pick(distances, &mut spec.distances);
            pick(angles, &mut spec.angles_deg);
            let name = format!("deviation_{}", spec.name);
            run_experiment(g, &spec, &name)
        }
        Command::Calibrate(a) => match a.mode {
            CalibMode::Materials => cmd_calibrate_materials(g, a),
            CalibMode::Geometry => cmd_calibrate_geometry(g, a),
        },
        Command::Metrics {
            pred,
            gt,
            k,
            window,
            floor_db,
            radius_deg,
            optimal,
        } => {
            let read = |p: &Path| read_spectrum_csv(p).map_err(HarnessError::Config);
            let (ps, gs) = (read(pred)?, read(gt)?);
            let params = PeakParams {
                k: *k,
                window: *window,
                floor_db: *floor_db,
            };
            let mode = if *optimal { Matching::Optimal } else { Matching::Greedy };
            let (report, pp, gp) = evaluate(&ps, &gs, &params, *radius_deg, mode);
            let stem = g.out.join("metrics");
            write_report(&stem, &report, &pp, &gp).map_err(|e| HarnessError::io(&stem, e))
        }
        Command::BuildScene {
            kind,
            scale,
            distance,
            incidence_deg,
            size,
        } => {
            let kind = match kind {
                BuiltinKind::SingleReflector => SceneKind::SingleReflector {
                    scale: *scale,
                    tx_distance: *distance,
                    rx_distance: *distance,
                    incidence_deg: *incidence_deg,
                },
                BuiltinKind::BoxRoom => {
                    let s: [f64; 3] = size
                        .as_slice()
                        .try_into()
                        .map_err(|_| HarnessError::Config("room size needs three values".into()))?;
                    SceneKind::BoxRoom { size: s }
                }
            };
            let mut built = build_scene(&kind)?;
            let obj = g.out.join("scene.obj");
            write_obj(&obj, &built.mesh).map_err(|e| HarnessError::io(&obj, e))?;
            built.file.mesh = MeshSpec::File {
                path: "scene.obj".into(),
                material_map: None,
            };
            let mut f = built.file;
            g.overrides().apply(&mut f);
            write_json(&g.out.join("scene.json"), &f)
        }
    }
}

fn meta(g: &GlobalArgs, command: &str, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": g.seed,
        "rays": g.rays,
        "max_depth": g.max_depth,
        "alpha_r": g.alpha_r,
        "args": extra,
    })
}

#[derive(Deserialize, Serialize)]
struct PosePair {
    tx_pose: PoseSpec,
    rx_pose: PoseSpec,
}

fn cmd_simulate(g: &GlobalArgs, scene_path: &Path, poses: Option<&Path>, png: bool) -> Result<(), HarnessError> {
    let scene = LoadedScene::load(scene_path)?;
    let cfg = scene.config(&g.overrides())?;
    let grid = scene.grid()?;
    let mut resolved = scene.file.clone();
    g.overrides().apply(&mut resolved);
    let info = meta(g, "simulate", json!({ "scene_path": scene_path, "scene": resolved, "poses": poses }));
    if let Some(p) = poses {
        let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
        let list: Vec<PosePair> =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
        let mut data = Vec::with_capacity(list.len());
        for (i, pp) in list.iter().enumerate() {
            let mut c = cfg.clone();
            c.tx.pose = pp.tx_pose.pose().map_err(HarnessError::Config)?;
            c.rx.pose = pp.rx_pose.pose().map_err(HarnessError::Config)?;
            c.seed = cfg.seed.wrapping_add(i as u64);
            let (_, _, spec) = simulate(&c, &grid)?;
            data.push(Measurement {
                rx_pose: c.rx.pose,
                tx_pose: c.tx.pose,
                spectrum: MeasuredSpectrum::Grid(spec),
            });
        }
        write_dataset(&g.out, &data)?;
        // Not a measurement file, so it must not end in .json.
        let path = g.out.join("dataset.meta");
        let text = serde_json::to_string_pretty(&info).map_err(|e| HarnessError::io(&path, e))?;
        return std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e));
    }
    let (paths, _, spec) = simulate(&cfg, &grid)?;
    let csv = g.out.join("spectrum.csv");
    let mut info = info;
    info["paths"] = paths.len().into();
    write_spectrum_csv(&csv, &spec, &info).map_err(|e| HarnessError::io(&csv, e))?;
    if png {
        render_polar_png(&g.out.join("spectrum.png"), &spec, 512, 40.0)?;
    }
    Ok(())
}

fn run_experiment(g: &GlobalArgs, spec: &ExperimentSpec, name: &str) -> Result<(), HarnessError> {
    let rows = spec.run()?;
    let csv = g.out.join(format!("{name}.csv"));
    write_deviation_csv(&csv, &rows)?;
    write_sidecar(&csv, &meta(g, name, serde_json::to_value(spec).expect("spec serializes")))
}

fn train_split(data: &[Measurement], holdout: usize) -> Result<usize, HarnessError> {
    if holdout >= data.len() {
        return Err(HarnessError::Config(format!(
            "holdout {holdout} leaves no training data out of {}",
            data.len()
        )));
    }
    Ok(data.len() - holdout)
}

fn cmd_calibrate_materials(g: &GlobalArgs, a: &CalibrateArgs) -> Result<(), HarnessError> {
    let data = load_dataset(&a.dataset)?;
    let scene = LoadedScene::load(&a.scene)?;
    let cfg = scene.config(&g.overrides())?;
    let alpha_r = match &cfg.materials {
        MaterialSource::Field { alpha_r, .. } => *alpha_r,
        MaterialSource::Table(_) => {
            return Err(HarnessError::Config("materials mode needs a field in the scene file".into()))
        }
    };
    let n_train = train_split(&data, a.holdout)?;
    let grid = crate::tracer::AngleGrid::hemisphere(a.grid_step);
    let tc = MaterialTrainConfig {
        epochs: a.epochs,
        lr: a.lr.unwrap_or(5e-4),
        seed: cfg.seed,
        grid: grid.clone(),
        offset_db: (a.offset_db >= 0.0).then_some(a.offset_db),
        final_lr_ratio: a.final_lr_ratio,
    };
    let ckpt = g.out.join("checkpoints");
    ensure_dir(&ckpt)?;
    let every = a.checkpoint_every.max(1);
    let out = calibrate_materials_with(&cfg, &data[..n_train], &tc, |epoch, field, _| {
        if (epoch + 1) % every == 0 {
            let p = ckpt.join(format!("field_epoch_{:04}.bin", epoch + 1));
            field.save(&p).map_err(|e| CalibError::Dataset(e.to_string()))?;
        }
        Ok(())
    })?;
    let final_path = g.out.join("field.bin");
    out.field.save(&final_path).map_err(|e| HarnessError::io(&final_path, e))?;
    let hist = g.out.join("history.csv");
    let mut w = csv::Writer::from_path(&hist).map_err(|e| HarnessError::io(&hist, e))?;
    w.write_record(["epoch", "loss"]).map_err(|e| HarnessError::io(&hist, e))?;
    for (i, l) in out.history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()]).map_err(|e| HarnessError::io(&hist, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&hist, e))?;
    let args = json!({
        "dataset": a.dataset, "scene": a.scene, "epochs": a.epochs, "lr": tc.lr,
        "holdout": a.holdout, "offset_db": tc.offset_db, "final_lr_ratio": tc.final_lr_ratio, "grid_step": a.grid_step,
    });
    write_sidecar(&hist, &meta(g, "calibrate materials", args))?;
    let held = &data[n_train..];
    if held.is_empty() {
        return Ok(());
    }
    let trained = super::selfcal::with_field(&cfg, MaterialField::clone(&out.field), alpha_r);
    let scores = score_measurements(&trained, held, &grid, cfg.seed.wrapping_add(1 << 20))?;
    let rows: Vec<serde_json::Value> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "measurement": n_train + i,
                "log_mae": s.log_mae,
                "top1_f1": s.top1.f1,
                "top1_aae_deg": s.top1.aae_deg,
                "top1_ape_db": s.top1.ape_db,
            })
        })
        .collect();
    let mean = |f: fn(&super::selfcal::HeldOutScore) -> Option<f64>| {
        let v: Vec<f64> = scores.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    write_json(
        &g.out.join("heldout.json"),
        &json!({
            "mean_log_mae": mean(|s| Some(s.log_mae)),
            "mean_top1_ape_db": mean(|s| s.top1.ape_db),
            "measurements": rows,
        }),
    )
}

fn cmd_calibrate_geometry(g: &GlobalArgs, a: &CalibrateArgs) -> Result<(), HarnessError> {
    let data = load_dataset(&a.dataset)?;
    let scene = LoadedScene::load(&a.scene)?;
    let rest = scene.mesh()?;
    let mut cfg = scene.config_with_mesh(rest.clone(), &g.overrides())?;
    let m = &data[0];
    let MeasuredSpectrum::Grid(reference) = &m.spectrum else {
        return Err(HarnessError::Config("geometry mode needs a gridded spectrum".into()));
    };
    cfg.tx.pose = m.tx_pose;
    cfg.rx.pose = m.rx_pose;
    let init: [f64; 6] = a
        .init
        .as_slice()
        .try_into()
        .map_err(|_| HarnessError::Config("--init needs six values".into()))?;
    let (lo, hi) = object_bounds(&rest, a.object)?;
    let mut rig = RigidOffset::new(a.object, (lo + hi).scale(0.5));
    rig.params = init;
    let target = Target::within_range(reference, a.range_db)?;
    let tc = GeometryTrainConfig {
        iters: a.iters,
        lr: a.lr.unwrap_or(0.02),
        free: a.free.clone(),
    };
    let out = calibrate_geometry(&cfg, &rest, &rig, &target, &tc)?;
    let traj = g.out.join("trajectory.csv");
    let mut w = csv::Writer::from_path(&traj).map_err(|e| HarnessError::io(&traj, e))?;
    w.write_record(["iter", "tx", "ty", "tz", "rx", "ry", "rz", "loss"])
        .map_err(|e| HarnessError::io(&traj, e))?;
    for (i, p) in out.trajectory.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|v| v.to_string()));
        rec.push(out.losses.get(i).map_or(String::new(), |l| l.to_string()));
        w.write_record(&rec).map_err(|e| HarnessError::io(&traj, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&traj, e))?;
    let args = json!({
        "dataset": a.dataset, "scene": a.scene, "iters": a.iters, "lr": tc.lr,
        "object": a.object, "init": a.init, "free": a.free, "range_db": a.range_db,
    });
    write_sidecar(&traj, &meta(g, "calibrate geometry", args))?;
    write_json(&g.out.join("geometry.json"), &json!({ "params": out.params }))
}

fn object_bounds(
    mesh: &crate::geometry::TriangleMesh,
    object: u32,
) -> Result<(crate::math::Vec3, crate::math::Vec3), HarnessError> {
    let mut lo = crate::math::Vec3::splat(f64::INFINITY);
    let mut hi = crate::math::Vec3::splat(f64::NEG_INFINITY);
    for (f, face) in mesh.faces.iter().enumerate() {
        if mesh.object_id[f] == object {
            for &i in face {
                lo = lo.min_elem(mesh.vertices[i as usize]);
                hi = hi.max_elem(mesh.vertices[i as usize]);
            }
        }
    }
    if !lo.is_finite() {
        return Err(HarnessError::Config(format!("mesh has no object {object}")));
    }
    Ok((lo, hi))
}
