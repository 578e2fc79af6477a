//! Directional scattering lobe `((1 + cos psi) / 2)^alpha / F(alpha, theta_i)`.
//!
//! `F` is the lobe's integral over the upper hemisphere, so the normalized
//! pattern carries unit energy. It is tabulated per exponent on a uniform
//! grid in `cos theta_i` and interpolated with Catmull-Rom cubics, which keeps
//! it smooth (and differentiable) at normal incidence.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use super::MaterialError;
use crate::math::{gauss_legendre_on, Real, Vec3};

const GRID: usize = 400;
const NODES_THETA: usize = 128;
const NODES_PHI: usize = 256;

/// Lobe half-angle where the (power) pattern halves.
fn psi_half(alpha: f64) -> f64 {
    (2.0 * 0.5f64.powf(1.0 / alpha) - 1.0).clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpbwConvention {
    /// The lobe value is a power density: half power where it halves.
    Power,
    /// The lobe value is a field amplitude: half power where it drops to 1/sqrt(2).
    Amplitude,
}

/// Full half-power beamwidth in degrees.
pub fn hpbw_deg(alpha: f64, conv: HpbwConvention) -> f64 {
    let level: f64 = match conv {
        HpbwConvention::Power => 0.5,
        HpbwConvention::Amplitude => 0.5f64.sqrt(),
    };
    let c = 2.0 * level.powf(1.0 / alpha) - 1.0;
    2.0 * c.clamp(-1.0, 1.0).acos().to_degrees()
}

fn split(total: usize, lens: &[f64]) -> Vec<usize> {
    let sum: f64 = lens.iter().sum();
    let mut n: Vec<usize> = lens.iter().map(|l| ((total as f64 * l / sum).round() as usize).max(8)).collect();
    let extra = n.iter().sum::<usize>() as isize - total as isize;
    if extra > 0 {
        let i = (0..n.len()).max_by_key(|&i| n[i]).unwrap();
        n[i] = n[i].saturating_sub(extra as usize).max(8);
    }
    n
}

fn panel_rule(edges: &[f64], nodes: &[usize]) -> Vec<(f64, f64)> {
    edges
        .windows(2)
        .zip(nodes)
        .flat_map(|(w, &n)| gauss_legendre_on(n, w[0], w[1]))
        .collect()
}

/// Composite Gauss-Legendre rule over the upper hemisphere with panels
/// concentrated on the lobe. Specular direction at azimuth 0.
fn lobe_integral(alpha: f64, cos_i: f64, nt: usize, np: usize) -> f64 {
    let ti = cos_i.clamp(-1.0, 1.0).acos();
    let si = ti.sin();
    let w = if alpha > 0.0 { 8.0 * psi_half(alpha) } else { PI };

    let (a, b) = ((ti - w).max(0.0), (ti + w).min(FRAC_PI_2));
    let mut tedges = vec![0.0];
    if a > 0.0 {
        tedges.push(a);
    }
    if b < FRAC_PI_2 {
        tedges.push(b);
    }
    tedges.push(FRAC_PI_2);
    let lobe_idx = usize::from(a > 0.0);
    let tnodes = if tedges.len() == 2 {
        vec![nt]
    } else {
        let others: Vec<f64> = tedges
            .windows(2)
            .enumerate()
            .filter(|(i, _)| *i != lobe_idx)
            .map(|(_, e)| e[1] - e[0])
            .collect();
        let rest = split(nt / 2, &others);
        let mut it = rest.into_iter();
        (0..tedges.len() - 1)
            .map(|i| if i == lobe_idx { nt / 2 } else { it.next().unwrap() })
            .collect()
    };
    let trule = panel_rule(&tedges, &tnodes);

    let phi_w = if ti > w {
        (w / ((ti - w).sin() * si).sqrt()).min(PI)
    } else {
        PI
    };
    let prule = if phi_w < PI {
        panel_rule(&[0.0, phi_w, PI], &[np / 2, np / 2])
    } else {
        panel_rule(&[0.0, PI], &[np])
    };

    let mut acc = 0.0;
    for &(t, wt) in &trule {
        let (st, ct) = t.sin_cos();
        let mut row = 0.0;
        for &(p, wp) in &prule {
            let cpsi = st * si * p.cos() + ct * cos_i;
            row += wp * (0.5 * (1.0 + cpsi)).max(0.0).powf(alpha);
        }
        acc += wt * st * row;
    }
    2.0 * acc
}

/// Normalization integral tabulated on `cos theta_i in [0, 1]`.
#[derive(Debug)]
pub struct NormTable {
    alpha: f64,
    values: Vec<f64>,
}

fn cache() -> &'static Mutex<HashMap<u64, Arc<NormTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<NormTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl NormTable {
    /// Direct quadrature of the hemispherical lobe integral, checked by
    /// comparing against a half-resolution rule.
    pub fn quadrature(alpha: f64, cos_i: f64) -> Result<f64, MaterialError> {
        let fine = lobe_integral(alpha, cos_i, NODES_THETA, NODES_PHI);
        let coarse = lobe_integral(alpha, cos_i, NODES_THETA / 2, NODES_PHI / 2);
        let change = ((fine - coarse) / fine).abs();
        if !fine.is_finite() || !(change < 1e-7) {
            return Err(MaterialError::NonConvergence { alpha, cos_i, change });
        }
        Ok(fine)
    }

    /// Shared table for `alpha`, built on first use.
    pub fn get(alpha: f64) -> Result<Arc<NormTable>, MaterialError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(MaterialError::Invalid(format!("lobe exponent {alpha}")));
        }
        let key = alpha.to_bits();
        if let Some(t) = cache().lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(t.clone());
        }
        // Built without holding the lock: callers may already be rayon tasks.
        let values = (0..=GRID)
            .into_par_iter()
            .map(|j| Self::quadrature(alpha, j as f64 / GRID as f64))
            .collect::<Result<Vec<_>, _>>()?;
        let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
        Ok(map.entry(key).or_insert_with(|| Arc::new(NormTable { alpha, values })).clone())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn node(&self, j: isize) -> f64 {
        let n = GRID as isize;
        if j < 0 {
            2.0 * self.values[0] - self.values[1]
        } else if j > n {
            2.0 * self.values[GRID] - self.values[GRID - 1]
        } else {
            self.values[j as usize]
        }
    }

    /// Interpolated `F` at `cos theta_i` (clamped to `[0, 1]`).
    pub fn eval<R: Real>(&self, cos_i: R) -> R {
        let u = cos_i.val();
        if !(u > 0.0) {
            return R::cst(self.values[0]);
        }
        if u >= 1.0 {
            return R::cst(self.values[GRID]);
        }
        let x = u * GRID as f64;
        let j = (x.floor() as isize).min(GRID as isize - 1);
        let (p0, p1, p2, p3) = (self.node(j - 1), self.node(j), self.node(j + 1), self.node(j + 2));
        let a = p1;
        let b = 0.5 * (p2 - p0);
        let c = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let d = 0.5 * (p3 - p0) + 1.5 * (p1 - p2);
        let t = cos_i * GRID as f64 - j as f64;
        ((t * d + c) * t + b) * t + a
    }
}

/// `F(alpha, theta_i)` for `theta_i in [0, pi/2)`.
pub fn normalization_factor(alpha: f64, theta_i: f64) -> Result<f64, MaterialError> {
    normalization_factor_cos(alpha, theta_i.cos())
}

pub fn normalization_factor_cos(alpha: f64, cos_i: f64) -> Result<f64, MaterialError> {
    Ok(NormTable::get(alpha)?.eval(cos_i))
}

/// Normalized lobe value (sr^-1) at deviation `psi` from specular.
pub fn scattering_pattern(alpha: f64, theta_i: f64, psi: f64) -> Result<f64, MaterialError> {
    let t = NormTable::get(alpha)?;
    Ok(scattering_pattern_cos(&t, theta_i.cos(), psi.cos()))
}

pub fn scattering_pattern_cos<R: Real>(table: &NormTable, cos_i: R, cos_psi: R) -> R {
    let base = (cos_psi + 1.0) * 0.5;
    let lobe = if table.alpha == 0.0 {
        R::one()
    } else if base.val() <= 0.0 {
        R::zero()
    } else {
        base.powf(table.alpha)
    };
    lobe / table.eval(cos_i)
}

/// Density of the unclipped lobe over the full sphere.
pub fn lobe_pdf(alpha: f64, cos_psi: f64) -> f64 {
    (alpha + 1.0) / (4.0 * PI) * (0.5 * (1.0 + cos_psi)).max(0.0).powf(alpha)
}

pub fn cosine_hemisphere_pdf(cos_theta: f64) -> f64 {
    cos_theta.max(0.0) / PI
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LobeSample {
    pub dir: Vec3,
    /// Solid-angle density of `dir`.
    pub pdf: f64,
    /// Below the surface: the sample contributes nothing.
    pub below_surface: bool,
}

fn orthonormal_around(axis: Vec3) -> (Vec3, Vec3) {
    let t = axis.any_perpendicular();
    (t, axis.cross(t))
}

/// Inverse-CDF sample of the lobe around `axis` from two uniforms.
pub fn sample_lobe(alpha: f64, axis: Vec3, normal: Vec3, xi: [f64; 2]) -> LobeSample {
    let u = xi[0].powf(1.0 / (alpha + 1.0));
    let cpsi = (2.0 * u - 1.0).clamp(-1.0, 1.0);
    let spsi = (1.0 - cpsi * cpsi).max(0.0).sqrt();
    let chi = 2.0 * PI * xi[1];
    let (t, b) = orthonormal_around(axis);
    let dir = (axis.scale(cpsi) + t.scale(spsi * chi.cos()) + b.scale(spsi * chi.sin())).normalized();
    LobeSample {
        dir,
        pdf: lobe_pdf(alpha, cpsi),
        below_surface: dir.dot(normal) <= 0.0,
    }
}

pub fn sample_scatter_direction<G: Rng + ?Sized>(alpha: f64, specular: Vec3, normal: Vec3, rng: &mut G) -> LobeSample {
    sample_lobe(alpha, specular, normal, [rng.random(), rng.random()])
}

/// Cosine-weighted direction about `normal`.
pub fn sample_cosine_hemisphere(normal: Vec3, xi: [f64; 2]) -> LobeSample {
    let r = xi[0].sqrt();
    let phi = 2.0 * PI * xi[1];
    let z = (1.0 - xi[0]).max(0.0).sqrt();
    let (t, b) = orthonormal_around(normal);
    let dir = (normal.scale(z) + t.scale(r * phi.cos()) + b.scale(r * phi.sin())).normalized();
    let c = dir.dot(normal);
    LobeSample {
        dir,
        pdf: cosine_hemisphere_pdf(c),
        below_surface: c <= 0.0,
    }
}
