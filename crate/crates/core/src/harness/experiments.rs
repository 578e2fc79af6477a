use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LoadedScene, MaterialSpec, Overrides};
use super::scenes::{build_scene, SceneKind};
use super::HarnessError;
use crate::materials::{complex_permittivity, fresnel_coeffs};
use crate::math::db10;
use crate::tracer::{per_element_power, specular_reference_gain, trace_paths};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    Directivity,
    Distance,
    IncidentAngle,
}

/// One reflector configuration compared with the mirror path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub scale: f64,
    pub alpha_r: f64,
    pub tx_distance: f64,
    pub rx_distance: f64,
    pub incidence_deg: f64,
    pub gain_db: f64,
    pub reference_db: f64,
    /// Reference minus traced gain; positive when the trace falls short.
    pub deviation_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectorCase {
    pub scale: f64,
    pub alpha_r: f64,
    pub tx_distance: f64,
    pub rx_distance: f64,
    pub incidence_deg: f64,
}

impl ReflectorCase {
    pub fn symmetric(scale: f64, alpha_r: f64) -> Self {
        Self {
            scale,
            alpha_r,
            tx_distance: 25.0,
            rx_distance: 25.0,
            incidence_deg: 45.0,
        }
    }
}

/// Traced single-bounce gain of a conducting plate against the mirror-path
/// gain over the unfolded length.
pub fn reflector_deviation(case: &ReflectorCase, rays: usize, seed: u64) -> Result<DeviationRow, HarnessError> {
    let kind = SceneKind::SingleReflector {
        scale: case.scale,
        tx_distance: case.tx_distance,
        rx_distance: case.rx_distance,
        incidence_deg: case.incidence_deg,
    };
    let built = build_scene(&kind)?;
    let scene = LoadedScene {
        file: built.file,
        base_dir: Default::default(),
    };
    let ov = Overrides {
        seed: Some(seed),
        rays: Some(rays),
        max_depth: Some(1),
        alpha_r: Some(case.alpha_r),
    };
    let cfg = scene.config_with_mesh(built.mesh, &ov)?;
    let paths = trace_paths(&cfg)?;
    let gain = per_element_power(&paths, &cfg)[0].re / cfg.tx_power;
    let m = match &scene.file.materials {
        MaterialSpec::Table(t) => t[0].material,
        _ => unreachable!("builtin scenes carry a table"),
    };
    let eta = complex_permittivity(m.eps_r, m.sigma, cfg.freq);
    // Both antennas are theta-polarized in the plane of incidence.
    let gamma = fresnel_coeffs(eta, case.incidence_deg.to_radians()).1.abs();
    let reference = specular_reference_gain(gamma, case.tx_distance + case.rx_distance, cfg.wavelength());
    Ok(DeviationRow {
        scale: case.scale,
        alpha_r: case.alpha_r,
        tx_distance: case.tx_distance,
        rx_distance: case.rx_distance,
        incidence_deg: case.incidence_deg,
        gain_db: db10(gain),
        reference_db: db10(reference),
        deviation_db: db10(reference) - db10(gain),
    })
}

/// Named experiment with its sweep lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scales: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Transmitter distances for the distance sweep (m).
    pub distances: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub rays: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn converge(scales: Vec<f64>, alphas: Vec<f64>, rays: usize, seed: u64) -> Self {
        Self {
            name: "converge".into(),
            scales,
            alphas,
            distances: vec![25.0],
            angles_deg: vec![45.0],
            rays,
            seed,
        }
    }

    /// Defaults for each sweep axis; the lists can be replaced afterwards.
    pub fn sweep(axis: SweepAxis, rays: usize, seed: u64) -> Self {
        let (name, scales, alphas, distances, angles) = match axis {
            SweepAxis::Directivity => (
                "directivity",
                vec![5.0, 20.0, 200.0],
                vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 120.0],
                vec![25.0],
                vec![45.0],
            ),
            SweepAxis::Distance => (
                "distance",
                vec![5.0],
                vec![120.0],
                vec![5.0, 10.0, 25.0, 50.0, 100.0],
                vec![45.0],
            ),
            SweepAxis::IncidentAngle => (
                "incident_angle",
                vec![200.0],
                vec![10.0, 50.0, 120.0],
                vec![25.0],
                (0..=17).map(|k| 5.0 * k as f64).collect(),
            ),
        };
        Self {
            name: name.into(),
            scales,
            alphas,
            distances,
            angles_deg: angles,
            rays,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !["converge", "directivity", "distance", "incident_angle"].contains(&self.name.as_str()) {
            return Err(HarnessError::Config(format!("unknown experiment {:?}", self.name)));
        }
        if self.scales.is_empty() || self.alphas.is_empty() || self.distances.is_empty() || self.angles_deg.is_empty()
        {
            return Err(HarnessError::Config("sweep lists must be non-empty".into()));
        }
        if self.rays == 0 {
            return Err(HarnessError::Config("ray count must be at least 1".into()));
        }
        Ok(())
    }

    /// Every combination, alpha outermost. The receiver stays at 25 m when
    /// the transmitter distance is swept.
    pub fn run(&self) -> Result<Vec<DeviationRow>, HarnessError> {
        self.validate()?;
        let mut rows = Vec::new();
        for &alpha_r in &self.alphas {
            for &scale in &self.scales {
                for &tx_distance in &self.distances {
                    for &incidence_deg in &self.angles_deg {
                        let case = ReflectorCase {
                            scale,
                            alpha_r,
                            tx_distance,
                            rx_distance: if self.name == "distance" { 25.0 } else { tx_distance },
                            incidence_deg,
                        };
                        rows.push(reflector_deviation(&case, self.rays, self.seed)?);
                    }
                }
            }
        }
        Ok(rows)
    }
}

pub fn write_deviation_csv(path: &Path, rows: &[DeviationRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
