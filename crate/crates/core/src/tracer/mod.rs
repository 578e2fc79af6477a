//! Backward Monte Carlo tracing from the receiver, per-element power
//! integration and AoA spectrum synthesis.

mod eval;
mod io;

pub use eval::{eval_path, PathEval, VertexState};
pub use io::{read_spectrum_csv, write_spectrum_csv};

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::{rx_element_phase, AntennaError, AntennaPattern, ArrayGeometry, Pose, Precoding};
use crate::geometry::{Accel, Ray};
use crate::materials::{
    lobe_pdf, reflect, sample_cosine_hemisphere, sample_lobe, MaterialError, MaterialField, MaterialParams,
    NormTable, RadioMaterial,
};
use crate::math::{sph_dir, Mat2, Mat3, Vec3, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rays per RNG stream; fixes the random sequence independently of the
/// number of worker threads.
pub const RAY_CHUNK: usize = 8192;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid scene: {0}")]
    Config(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Antenna(#[from] AntennaError),
}

/// One end of the link.
#[derive(Clone, Debug)]
pub struct Endpoint {
    pub pose: Pose,
    pub pattern: AntennaPattern,
    pub array: ArrayGeometry,
    /// Only used on the transmit side.
    pub precoding: Precoding,
}

impl Endpoint {
    pub fn single(pose: Pose, pattern: AntennaPattern, wavelength: f64) -> Self {
        Self {
            pose,
            pattern,
            array: ArrayGeometry::single(wavelength),
            precoding: Precoding::uniform(1),
        }
    }

    pub fn with_array(pose: Pose, pattern: AntennaPattern, array: ArrayGeometry) -> Self {
        let n = array.len();
        Self {
            pose,
            pattern,
            array,
            precoding: Precoding::uniform(n),
        }
    }
}

#[derive(Clone, Debug)]
pub enum MaterialSource {
    /// Indexed by the mesh's per-face material id.
    Table(Vec<RadioMaterial>),
    Field { field: Arc<MaterialField>, alpha_r: f64 },
}

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub accel: Arc<Accel>,
    pub materials: MaterialSource,
    pub tx: Endpoint,
    pub rx: Endpoint,
    /// Hz
    pub freq: f64,
    pub rays: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// W
    pub tx_power: f64,
    pub include_los: bool,
    pub sampling: RaySampling,
}

/// How receiver directions are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaySampling {
    /// Fibonacci lattice under a seeded random rotation.
    #[default]
    Lattice,
    /// Independent uniform directions.
    Independent,
    /// Lattice directions in pairs mirrored across the plane through the
    /// receiver with this normal (antithetic sampling for symmetric scenes).
    Mirrored { normal: [f64; 3] },
}

impl SceneConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.freq
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::Config(m.into()));
        if self.rays == 0 {
            return bad("ray count must be at least 1");
        }
        if !(self.freq > 0.0 && self.freq.is_finite()) {
            return bad("frequency must be positive");
        }
        if !(self.tx_power >= 0.0 && self.tx_power.is_finite()) {
            return bad("tx power must be non-negative");
        }
        if let RaySampling::Mirrored { normal } = self.sampling {
            let n = Vec3::from_array(normal);
            if !(n.norm() > 0.0 && n.is_finite()) {
                return bad("mirror normal must be a non-zero vector");
            }
        }
        if self.tx.precoding.weights.len() != self.tx.array.len() {
            return Err(AntennaError::Length {
                got: self.tx.precoding.weights.len(),
                want: self.tx.array.len(),
            }
            .into());
        }
        match &self.materials {
            MaterialSource::Table(t) => {
                for m in t {
                    m.validate()?;
                }
                if let Some(&id) = self.accel.mesh().material_id.iter().max() {
                    if id as usize >= t.len() {
                        return bad(&format!("face material id {id} but only {} materials", t.len()));
                    }
                }
            }
            MaterialSource::Field { alpha_r, .. } => {
                if !(*alpha_r >= 0.0 && alpha_r.is_finite()) {
                    return bad("alpha_r must be non-negative");
                }
            }
        }
        Ok(())
    }
}

/// A surface interaction along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathVertex {
    pub point: Vec3,
    /// Geometric face normal (either orientation).
    pub normal: Vec3,
    pub face_id: u32,
    pub material_id: u32,
    pub object_id: u32,
}

#[derive(Clone, Debug)]
pub struct PathSample {
    /// Propagation direction leaving the transmitter.
    pub k_aod: Vec3,
    /// Propagation direction arriving at the receiver.
    pub k_aoa: Vec3,
    /// Product of interaction matrices, spreading and the `lambda / 4 pi`
    /// aperture factor, in the global field bases.
    pub transfer: Mat2,
    pub depth: usize,
    /// Inverse sampling density divided by the ray count.
    pub mc_weight: f64,
    /// Interactions ordered from the transmitter to the receiver.
    pub vertices: Vec<PathVertex>,
}

/// Per-run lookups shared by all rays.
pub(crate) struct Resolved {
    tables: Vec<Arc<NormTable>>,
}

impl Resolved {
    pub(crate) fn new(cfg: &SceneConfig) -> Result<Self, TraceError> {
        let tables = match &cfg.materials {
            MaterialSource::Table(t) => t
                .iter()
                .map(|m| NormTable::get(m.alpha_r))
                .collect::<Result<Vec<_>, _>>()?,
            MaterialSource::Field { alpha_r, .. } => vec![NormTable::get(*alpha_r)?],
        };
        Ok(Self { tables })
    }

    pub(crate) fn table(&self, cfg: &SceneConfig, v: &PathVertex) -> &NormTable {
        match cfg.materials {
            MaterialSource::Table(_) => &self.tables[v.material_id as usize],
            MaterialSource::Field { .. } => &self.tables[0],
        }
    }

    pub(crate) fn material(&self, cfg: &SceneConfig, v: &PathVertex) -> (MaterialParams<f64>, f64) {
        match &cfg.materials {
            MaterialSource::Table(t) => {
                let m = &t[v.material_id as usize];
                (m.params(), m.alpha_r)
            }
            MaterialSource::Field { field, alpha_r } => (field.eval(v.point), *alpha_r),
        }
    }

    pub(crate) fn states<'a>(&'a self, cfg: &SceneConfig, verts: &[PathVertex]) -> Vec<VertexState<'a, f64>> {
        verts
            .iter()
            .map(|v| VertexState {
                point: v.point,
                normal: v.normal,
                material: self.material(cfg, v).0,
                table: self.table(cfg, v),
            })
            .collect()
    }
}

/// Uniform random rotation from three uniforms (unit quaternion method).
fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    Mat3 {
        r: [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ],
    }
}

/// Point `i` of an `n`-point Fibonacci lattice on the unit sphere.
pub fn fibonacci_direction(i: usize, n: usize) -> Vec3 {
    let golden = PI * (3.0 - 5f64.sqrt());
    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden * i as f64;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn uniform_direction(xi: [f64; 2]) -> Vec3 {
    let z = 1.0 - 2.0 * xi[0];
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * xi[1];
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Direction set for a run: a Fibonacci lattice under a seeded rotation.
pub fn ray_directions(seed: u64, n: usize) -> impl Fn(usize) -> Vec3 {
    let rot = random_rotation(&mut stream_rng(seed, 0));
    move |i| rot.mul_vec(fibonacci_direction(i, n))
}

pub fn trace_paths(cfg: &SceneConfig) -> Result<Vec<PathSample>, TraceError> {
    cfg.validate()?;
    let res = Resolved::new(cfg)?;
    let dirs = match cfg.sampling {
        RaySampling::Mirrored { .. } => ray_directions(cfg.seed, cfg.rays.div_ceil(2)),
        _ => ray_directions(cfg.seed, cfg.rays),
    };
    let n_chunks = cfg.rays.div_ceil(RAY_CHUNK);
    let chunks: Vec<Vec<PathSample>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, c as u64 + 1);
            let mut out = Vec::new();
            for i in c * RAY_CHUNK..((c + 1) * RAY_CHUNK).min(cfg.rays) {
                let d = match cfg.sampling {
                    RaySampling::Lattice => dirs(i),
                    RaySampling::Independent => uniform_direction([rng.random(), rng.random()]),
                    RaySampling::Mirrored { normal } => {
                        let d = dirs(i / 2);
                        if i % 2 == 0 {
                            d
                        } else {
                            let n = Vec3::from_array(normal).normalized();
                            d - n.scale(2.0 * d.dot(n))
                        }
                    }
                };
                trace_ray(cfg, &res, d, &mut rng, &mut out);
            }
            out
        })
        .collect();
    let mut paths = Vec::new();
    let (tx, rx) = (cfg.tx.pose.position, cfg.rx.pose.position);
    if cfg.include_los && !cfg.accel.occluded(tx, rx) && (rx - tx).norm() > 0.0 {
        paths.push(make_sample(cfg, &res, Vec::new(), 1.0));
    }
    paths.extend(chunks.into_iter().flatten());
    Ok(paths)
}

fn make_sample(cfg: &SceneConfig, res: &Resolved, vertices: Vec<PathVertex>, mc_weight: f64) -> PathSample {
    let ev = eval_path(cfg, &res.states(cfg, &vertices));
    let (tx, rx) = (cfg.tx.pose.position, cfg.rx.pose.position);
    let first = vertices.first().map_or(rx, |v| v.point);
    let last = vertices.last().map_or(tx, |v| v.point);
    PathSample {
        k_aod: (first - tx).normalized(),
        k_aoa: (rx - last).normalized(),
        transfer: ev.transfer,
        depth: vertices.len(),
        mc_weight,
        vertices,
    }
}

fn trace_ray(cfg: &SceneConfig, res: &Resolved, dir0: Vec3, rng: &mut ChaCha8Rng, out: &mut Vec<PathSample>) {
    let tx = cfg.tx.pose.position;
    let mut prev = cfg.rx.pose.position;
    let mut origin = prev;
    let mut dir = dir0;
    let mut dir_pdf = cfg.rays as f64 / (4.0 * PI);
    let mut weight = 1.0;
    // Receiver side first; reversed on emission.
    let mut chain: Vec<PathVertex> = Vec::new();
    for depth in 1..=cfg.max_depth {
        let Some(hit) = cfg.accel.intersect(&Ray { origin, dir }, 0.0, f64::INFINITY) else {
            return;
        };
        let r = (hit.point - prev).norm();
        let cos_o = dir.dot(hit.normal).abs();
        if cos_o <= 0.0 || dir_pdf <= 0.0 {
            return;
        }
        weight *= r * r / (dir_pdf * cos_o);
        let mesh = cfg.accel.mesh();
        let v = PathVertex {
            point: hit.point,
            normal: mesh.face_normals[hit.face_id as usize],
            face_id: hit.face_id,
            material_id: hit.material_id,
            object_id: mesh.object_id[hit.face_id as usize],
        };
        chain.push(v);
        if !cfg.accel.occluded(hit.point, tx) {
            let verts: Vec<PathVertex> = chain.iter().rev().copied().collect();
            let s = make_sample(cfg, res, verts, weight);
            if s.transfer != Mat2::zero() {
                out.push(s);
            }
        }
        if depth == cfg.max_depth {
            return;
        }
        // Continue toward the transmitter side.
        let (mat, alpha) = res.material(cfg, &v);
        let n = hit.normal;
        let spec = reflect(dir, n);
        let q_lobe = 1.0 - mat.s * mat.s;
        let xi = [rng.random::<f64>(), rng.random::<f64>()];
        let sample = if rng.random::<f64>() < q_lobe {
            sample_lobe(alpha, spec, n, xi)
        } else {
            sample_cosine_hemisphere(n, xi)
        };
        if sample.below_surface {
            return;
        }
        let c = sample.dir.dot(n);
        dir_pdf = q_lobe * lobe_pdf(alpha, sample.dir.dot(spec)) + (1.0 - q_lobe) * c / PI;
        prev = hit.point;
        origin = hit.spawn_point();
        dir = sample.dir;
    }
}

/// Received power of one path before the Monte Carlo weight.
pub fn path_power(cfg: &SceneConfig, path: &PathSample) -> f64 {
    let a = eval::received_amplitude(cfg, &path.transfer, path.k_aod, path.k_aoa);
    cfg.tx_power * a.norm_sqr()
}

/// `P_m = sum_i p_i exp(-j k d_m . k_aoa)`, with `p_i` the weighted path power.
pub fn per_element_power(paths: &[PathSample], cfg: &SceneConfig) -> Vec<C64> {
    let arr = &cfg.rx.array;
    let mut out = vec![C64::ZERO; arr.len()];
    for p in paths {
        let w = path_power(cfg, p) * p.mc_weight;
        if w == 0.0 {
            continue;
        }
        let k = cfg.rx.pose.to_local(p.k_aoa);
        for (m, o) in out.iter_mut().enumerate() {
            *o += rx_element_phase(arr, m, k).expect("index in range").scale(w);
        }
    }
    out
}

/// Elevation and azimuth axes in degrees, in the receiver frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub el_deg: Vec<f64>,
    pub az_deg: Vec<f64>,
}

impl AngleGrid {
    /// `el = 0..=90`, `az = -180..180` at `step` degrees.
    pub fn hemisphere(step: f64) -> Self {
        let n_el = (90.0 / step).round() as usize + 1;
        let n_az = (360.0 / step).round() as usize;
        Self {
            el_deg: (0..n_el).map(|i| i as f64 * step).collect(),
            az_deg: (0..n_az).map(|j| -180.0 + j as f64 * step).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.el_deg.len() * self.az_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unit direction of a cell in the receiver frame.
    pub fn direction(&self, i: usize, j: usize) -> Vec3 {
        let (el, az) = (self.el_deg[i].to_radians(), self.az_deg[j].to_radians());
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self::hemisphere(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AoASpectrum {
    pub grid: AngleGrid,
    /// Row-major over (el, az), watts.
    pub values: Vec<f64>,
}

impl AoASpectrum {
    pub fn n_el(&self) -> usize {
        self.grid.el_deg.len()
    }

    pub fn n_az(&self) -> usize {
        self.grid.az_deg.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_az() + j]
    }

    /// `(el index, az index)` of the largest cell; ties go to the first.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best / self.n_az(), best % self.n_az())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Beamforming weights `exp(-j k d_m . u) / sqrt(M)` for every grid cell.
pub fn spectrum_kernel(array: &ArrayGeometry, grid: &AngleGrid) -> Vec<Vec<C64>> {
    let kw = array.wavenumber();
    let norm = 1.0 / (array.len() as f64).sqrt();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.el_deg.len() {
        for j in 0..grid.az_deg.len() {
            let u = grid.direction(i, j);
            out.push(array.offsets.iter().map(|d| C64::cis(-kw * d.dot(u)).scale(norm)).collect());
        }
    }
    out
}

pub fn aoa_spectrum(p: &[C64], cfg: &SceneConfig, grid: &AngleGrid) -> AoASpectrum {
    spectrum_from_elements(p, &cfg.rx.array, grid)
}

pub fn spectrum_from_elements(p: &[C64], array: &ArrayGeometry, grid: &AngleGrid) -> AoASpectrum {
    assert_eq!(p.len(), array.len(), "one value per receive element");
    let kw = array.wavenumber();
    let norm = 1.0 / (array.len() as f64).sqrt();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let u = grid.direction(c / grid.az_deg.len(), c % grid.az_deg.len());
            let mut acc = C64::ZERO;
            for (d, pm) in array.offsets.iter().zip(p) {
                acc += *pm * C64::cis(-kw * d.dot(u));
            }
            acc.abs() * norm
        })
        .collect();
    AoASpectrum {
        grid: grid.clone(),
        values,
    }
}

/// Trace, integrate and beamform in one call.
pub fn simulate(cfg: &SceneConfig, grid: &AngleGrid) -> Result<(Vec<PathSample>, Vec<C64>, AoASpectrum), TraceError> {
    let paths = trace_paths(cfg)?;
    let p = per_element_power(&paths, cfg);
    let spec = aoa_spectrum(&p, cfg, grid);
    Ok((paths, p, spec))
}

/// Free-space power ratio `(lambda / 4 pi d)^2`.
pub fn friis_gain(lambda: f64, d: f64) -> f64 {
    (lambda / (4.0 * PI * d)).powi(2)
}

/// Mirror-path power `(lambda |gamma| / 4 pi r)^2` over the unfolded length.
pub fn specular_reference_gain(gamma: f64, r_spec: f64, lambda: f64) -> f64 {
    (lambda * gamma / (4.0 * PI * r_spec)).powi(2)
}

/// Unit direction from elevation/azimuth in degrees, receiver frame.
pub fn el_az_direction(el_deg: f64, az_deg: f64) -> Vec3 {
    sph_dir((90.0 - el_deg).to_radians(), az_deg.to_radians())
}
