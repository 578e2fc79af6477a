use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scenes::{build_scene, SceneKind};
use super::HarnessError;
use crate::antenna::{hanning_taper, hanning_taper_2d, AntennaPattern, ArrayGeometry, Precoding, TabulatedPattern};
use crate::calibrate::PoseSpec;
use crate::geometry::{build_accel, load_mesh_with_materials, MeshFormat, TriangleMesh};
use crate::materials::{load_material_table, MaterialField, NamedMaterial};
use crate::math::Vec3;
use crate::tracer::{AngleGrid, Endpoint, MaterialSource, RaySampling, SceneConfig, SPEED_OF_LIGHT};

/// Scene description read from JSON. Relative paths resolve against the
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub mesh: MeshSpec,
    pub materials: MaterialSpec,
    #[serde(default = "default_freq")]
    pub freq_hz: f64,
    pub tx: EndpointSpec,
    pub rx: EndpointSpec,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default = "default_step")]
    pub grid_step_deg: f64,
}

fn default_freq() -> f64 {
    28e9
}

fn default_step() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        material_map: Option<PathBuf>,
    },
    Builtin(SceneKind),
    /// Free space.
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialSpec {
    /// Indexed by face material id.
    Table(Vec<NamedMaterial>),
    TableFile(PathBuf),
    /// Saved field checkpoint.
    Field { path: PathBuf, alpha_r: f64 },
    /// Freshly initialized field.
    RandomField { seed: u64, alpha_r: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub pose: PoseSpec,
    #[serde(default)]
    pub pattern: PatternSpec,
    #[serde(default)]
    pub array: ArraySpec,
    #[serde(default)]
    pub precoding: PrecodingSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PatternSpec {
    #[default]
    IsotropicV,
    CosinePower {
        exponent: f64,
    },
    CosineHpbw {
        hpbw_deg: f64,
    },
    Dipole,
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ArraySpec {
    #[default]
    Single,
    /// Along local x.
    Line { n: usize, spacing_wl: f64 },
    /// In the local xy-plane.
    Ura { nx: usize, ny: usize, spacing_wl: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    None,
    Hanning,
}

/// Transmit weights; ignored on the receive side.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecodingSpec {
    /// Beam direction in the array frame; uniform weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer: Option<[f64; 3]>,
    #[serde(default)]
    pub taper: Taper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub rays: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub tx_power_w: f64,
    pub include_los: bool,
    pub sampling: RaySampling,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            rays: 100_000,
            max_depth: 2,
            seed: 0,
            tx_power_w: 1.0,
            include_los: true,
            sampling: RaySampling::Lattice,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rays: Option<usize>,
    pub max_depth: Option<usize>,
    pub alpha_r: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, f: &mut SceneFile) {
        if let Some(s) = self.seed {
            f.trace.seed = s;
        }
        if let Some(r) = self.rays {
            f.trace.rays = r;
        }
        if let Some(d) = self.max_depth {
            f.trace.max_depth = d;
        }
        if let Some(a) = self.alpha_r {
            match &mut f.materials {
                MaterialSpec::Table(t) => t.iter_mut().for_each(|m| m.material.alpha_r = a),
                MaterialSpec::Field { alpha_r, .. } | MaterialSpec::RandomField { alpha_r, .. } => *alpha_r = a,
                // Applied after the table is read.
                MaterialSpec::TableFile(_) => {}
            }
        }
    }
}

/// A scene file together with the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub base_dir: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn cfg_err(m: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(m.to_string())
}

impl LoadedScene {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let file: SceneFile = serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Ok(Self {
            file,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn grid(&self) -> Result<AngleGrid, HarnessError> {
        let s = self.file.grid_step_deg;
        if !(s > 0.0 && s <= 90.0) {
            return Err(cfg_err(format!("grid step {s} deg")));
        }
        Ok(AngleGrid::hemisphere(s))
    }

    pub fn mesh(&self) -> Result<TriangleMesh, HarnessError> {
        match &self.file.mesh {
            MeshSpec::File { path, material_map } => {
                let p = resolve(&self.base_dir, path);
                let fmt = MeshFormat::from_path(&p)
                    .ok_or_else(|| cfg_err(format!("{}: unknown mesh extension", p.display())))?;
                let map = material_map.as_ref().map(|m| resolve(&self.base_dir, m));
                let (mesh, _) = load_mesh_with_materials(&p, fmt, map.as_deref()).map_err(cfg_err)?;
                Ok(mesh)
            }
            MeshSpec::Builtin(kind) => Ok(build_scene(kind)?.mesh),
            MeshSpec::Empty => Ok(TriangleMesh::default()),
        }
    }

    fn materials(&self, ov: &Overrides) -> Result<MaterialSource, HarnessError> {
        let table = |t: Vec<NamedMaterial>| {
            MaterialSource::Table(
                t.into_iter()
                    .map(|m| {
                        let mut m = m.material;
                        if let Some(a) = ov.alpha_r {
                            m.alpha_r = a;
                        }
                        m
                    })
                    .collect(),
            )
        };
        Ok(match &self.file.materials {
            MaterialSpec::Table(t) => table(t.clone()),
            MaterialSpec::TableFile(p) => table(load_material_table(&resolve(&self.base_dir, p)).map_err(cfg_err)?),
            MaterialSpec::Field { path, alpha_r } => MaterialSource::Field {
                field: Arc::new(MaterialField::load(&resolve(&self.base_dir, path)).map_err(cfg_err)?),
                alpha_r: *alpha_r,
            },
            MaterialSpec::RandomField { seed, alpha_r } => MaterialSource::Field {
                field: Arc::new(MaterialField::new(*seed)),
                alpha_r: *alpha_r,
            },
        })
    }

    fn endpoint(&self, e: &EndpointSpec, lambda: f64, tx: bool) -> Result<Endpoint, HarnessError> {
        let pose = e.pose.pose().map_err(cfg_err)?;
        let pattern = match &e.pattern {
            PatternSpec::IsotropicV => AntennaPattern::IsotropicV,
            PatternSpec::CosinePower { exponent } => AntennaPattern::CosinePower { exponent: *exponent },
            PatternSpec::CosineHpbw { hpbw_deg } => AntennaPattern::cosine_power_from_hpbw(*hpbw_deg).map_err(cfg_err)?,
            PatternSpec::Dipole => AntennaPattern::Dipole,
            PatternSpec::Tabulated { path } => {
                AntennaPattern::Tabulated(TabulatedPattern::from_csv(&resolve(&self.base_dir, path)).map_err(cfg_err)?)
            }
        };
        let (array, taper) = match e.array {
            ArraySpec::Single => (ArrayGeometry::single(lambda), vec![1.0]),
            ArraySpec::Line { n, spacing_wl } => {
                if n == 0 || !(spacing_wl > 0.0) {
                    return Err(cfg_err("line array needs n >= 1 and positive spacing"));
                }
                (ArrayGeometry::line(n, spacing_wl * lambda, lambda), hanning_taper(n))
            }
            ArraySpec::Ura { nx, ny, spacing_wl } => {
                if nx == 0 || ny == 0 || !(spacing_wl > 0.0) {
                    return Err(cfg_err("planar array needs nx, ny >= 1 and positive spacing"));
                }
                (ArrayGeometry::ura(nx, ny, spacing_wl * lambda, lambda), hanning_taper_2d(nx, ny))
            }
        };
        let mut ep = Endpoint::with_array(pose, pattern, array);
        if tx {
            let mut w = match e.precoding.steer {
                Some(k) => {
                    let k = Vec3::from_array(k);
                    if !(k.norm() > 0.0) {
                        return Err(cfg_err("steering direction must be non-zero"));
                    }
                    Precoding::matched(&ep.array, k.normalized())
                }
                None => Precoding::uniform(ep.array.len()),
            };
            if e.precoding.taper == Taper::Hanning {
                w = w.tapered(&taper);
            }
            ep.precoding = w;
        }
        Ok(ep)
    }

    /// Assemble a traceable scene around `mesh`.
    pub fn config_with_mesh(&self, mesh: TriangleMesh, ov: &Overrides) -> Result<SceneConfig, HarnessError> {
        let mut f = self.file.clone();
        ov.apply(&mut f);
        let lambda = SPEED_OF_LIGHT / f.freq_hz;
        let cfg = SceneConfig {
            accel: Arc::new(build_accel(mesh)),
            materials: self.materials(ov)?,
            tx: self.endpoint(&f.tx, lambda, true)?,
            rx: self.endpoint(&f.rx, lambda, false)?,
            freq: f.freq_hz,
            rays: f.trace.rays,
            max_depth: f.trace.max_depth,
            seed: f.trace.seed,
            tx_power: f.trace.tx_power_w,
            include_los: f.trace.include_los,
            sampling: f.trace.sampling,
        };
        cfg.validate().map_err(cfg_err)?;
        Ok(cfg)
    }

    pub fn config(&self, ov: &Overrides) -> Result<SceneConfig, HarnessError> {
        self.config_with_mesh(self.mesh()?, ov)
    }
}
