//! Neural material field: position -> (eps_r, sigma, s, xpd).
//!
//! A small ReLU MLP over a sinusoidal positional encoding. Forward and
//! reverse passes are written out by hand for speed; `forward_generic` runs
//! the same network on any [`Real`] and is used to cross-check the
//! hand-written vector-Jacobian product.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MaterialError, MaterialParams, EPS_R_RANGE, SIGMA_RANGE};
use crate::math::{Real, Vec3};

pub const FIELD_OCTAVES: usize = 6;
pub const FIELD_HIDDEN: usize = 64;
/// Number of hidden layers.
pub const FIELD_LAYERS: usize = 4;
const N_OUT: usize = 4;
/// Cross-polar leakage a fresh field starts from. From the midpoint 0.5
/// training tends to fall into the polarization-swapped solution near 1.
pub const XPD_INIT: f64 = 0.05;
const ENC_DIM: usize = 3 + 6 * FIELD_OCTAVES;

/// `[p, sin(2^k pi p), cos(2^k pi p)]` for octaves `k = 0..FIELD_OCTAVES`.
pub fn positional_encoding(p: Vec3) -> Vec<f64> {
    let mut out = Vec::with_capacity(ENC_DIM);
    out.extend(p.to_array());
    for k in 0..FIELD_OCTAVES {
        let f = (1u32 << k) as f64 * PI;
        out.extend(p.to_array().map(|c| (f * c).sin()));
        out.extend(p.to_array().map(|c| (f * c).cos()));
    }
    out
}

/// Map raw network outputs to physical ranges.
pub fn transform_raw<R: Real>(raw: [R; 4]) -> MaterialParams<R> {
    let (l0, l1) = (SIGMA_RANGE.0.ln(), SIGMA_RANGE.1.ln());
    MaterialParams {
        eps_r: raw[0].sigmoid() * (EPS_R_RANGE.1 - EPS_R_RANGE.0) + EPS_R_RANGE.0,
        sigma: (raw[1].sigmoid() * (l1 - l0) + l0).exp(),
        s: raw[2].sigmoid(),
        xpd: raw[3].sigmoid(),
    }
}

fn layer_sizes() -> Vec<usize> {
    let mut v = vec![ENC_DIM];
    v.extend(std::iter::repeat_n(FIELD_HIDDEN, FIELD_LAYERS));
    v.push(N_OUT);
    v
}

/// Activations kept from a forward pass for the reverse pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer (post-activation of the previous one).
    acts: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct Header {
    layers: Vec<usize>,
    octaves: usize,
    activation: String,
    transforms: Vec<String>,
    n_params: usize,
}

fn header() -> Header {
    Header {
        layers: layer_sizes(),
        octaves: FIELD_OCTAVES,
        activation: "relu".into(),
        transforms: vec![
            format!("eps_r=1+199*sigmoid"),
            format!("sigma=exp(lerp(ln 1e-3, ln 1e6, sigmoid))"),
            "s=sigmoid".into(),
            "xpd=sigmoid".into(),
        ],
        n_params: param_count(),
    }
}

fn param_count() -> usize {
    layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Flat parameters; per layer the weight matrix (row-major, `out x in`)
/// followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    params: Vec<f64>,
}

impl MaterialField {
    /// Uniform `+-1/sqrt(fan_in)` initialisation, except the xpd output
    /// bias, which is set so xpd starts near [`XPD_INIT`].
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count());
        for w in layer_sizes().windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        *params.last_mut().expect("non-empty network") = (XPD_INIT / (1.0 - XPD_INIT)).ln();
        Self { params }
    }

    pub fn zeros() -> Self {
        Self {
            params: vec![0.0; param_count()],
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), MaterialError> {
        if p.len() != self.params.len() {
            return Err(MaterialError::Invalid(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MaterialError::NonFiniteWeights);
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn forward_raw(&self, p: Vec3) -> [f64; 4] {
        self.forward_cached(p).0
    }

    pub fn forward_cached(&self, p: Vec3) -> ([f64; 4], MlpCache) {
        let sizes = layer_sizes();
        let mut x = positional_encoding(p);
        let mut acts = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for (li, w) in sizes.windows(2).enumerate() {
            let (ni, no) = (w[0], w[1]);
            let (wm, b) = self.params[off..off + ni * no + no].split_at(ni * no);
            let mut y: Vec<f64> = (0..no)
                .map(|o| b[o] + wm[o * ni..(o + 1) * ni].iter().zip(&x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if li + 2 < sizes.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(std::mem::replace(&mut x, y));
            off += ni * no + no;
        }
        ([x[0], x[1], x[2], x[3]], MlpCache { acts })
    }

    /// Accumulate `d_raw^T * d(raw)/d(params)` into `grad`.
    pub fn vjp(&self, cache: &MlpCache, d_raw: [f64; 4], grad: &mut [f64]) {
        let sizes = layer_sizes();
        let mut offs = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut dy = d_raw.to_vec();
        for li in (0..sizes.len() - 1).rev() {
            let (ni, no) = (sizes[li], sizes[li + 1]);
            let x = &cache.acts[li];
            let o0 = offs[li];
            let mut dx = vec![0.0; ni];
            for o in 0..no {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                let row = o0 + o * ni;
                for i in 0..ni {
                    grad[row + i] += g * x[i];
                    dx[i] += g * self.params[row + i];
                }
                grad[o0 + ni * no + o] += g;
            }
            if li > 0 {
                // ReLU mask: the stored input is the post-activation value.
                for (d, &a) in dx.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
    }

    /// Same network on arbitrary scalars; `params` must have `n_params` entries.
    pub fn forward_generic<R: Real>(params: &[R], p: Vec3) -> [R; 4] {
        let sizes = layer_sizes();
        let mut x: Vec<R> = positional_encoding(p).into_iter().map(R::cst).collect();
        let mut off = 0;
        for (li, w) in sizes.windows(2).enumerate() {
            let (ni, no) = (w[0], w[1]);
            let mut y = Vec::with_capacity(no);
            for o in 0..no {
                let mut acc = params[off + ni * no + o];
                for i in 0..ni {
                    acc = acc + params[off + o * ni + i] * x[i];
                }
                if li + 2 < sizes.len() && acc.val() <= 0.0 {
                    acc = R::zero();
                }
                y.push(acc);
            }
            x = y;
            off += ni * no + no;
        }
        [x[0], x[1], x[2], x[3]]
    }

    pub fn eval(&self, p: Vec3) -> MaterialParams<f64> {
        transform_raw(self.forward_raw(p))
    }

    pub fn save(&self, path: &Path) -> Result<(), MaterialError> {
        let err = |e: std::io::Error| MaterialError::File {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(err)?);
        let head = serde_json::to_string(&header()).expect("header serializes");
        writeln!(f, "{head}").map_err(err)?;
        for v in &self.params {
            f.write_all(&v.to_le_bytes()).map_err(err)?;
        }
        f.flush().map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        let err = |msg: String| MaterialError::File {
            path: path.display().to_string(),
            msg,
        };
        let mut r = BufReader::new(std::fs::File::open(path).map_err(|e| err(e.to_string()))?);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| err(e.to_string()))?;
        let got: Header = serde_json::from_str(line.trim_end()).map_err(|e| err(format!("bad header: {e}")))?;
        if got != header() {
            return Err(err(format!("architecture mismatch: {got:?}")));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| err(e.to_string()))?;
        if bytes.len() != 8 * got.n_params {
            return Err(err(format!("expected {} weight bytes, found {}", 8 * got.n_params, bytes.len())));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if params.iter().any(|v| !v.is_finite()) {
            return Err(MaterialError::NonFiniteWeights);
        }
        Ok(Self { params })
    }
}
