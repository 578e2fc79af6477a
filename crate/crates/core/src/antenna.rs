//! Radiation patterns, antenna poses, array layouts and array weights.
//!
//! Angles follow one convention everywhere: `theta` is the zenith angle from
//! local +z, `phi` the azimuth from local +x, and
//! `k(theta, phi) = (sin t cos p, sin t sin p, cos t)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use thiserror::Error;

use crate::math::{sph_angles, sph_basis, sph_dir, Mat3, Vec3, C64};

#[derive(Debug, Error)]
pub enum AntennaError {
    #[error("angle out of range: theta={theta}, phi={phi}")]
    AngleRange { theta: f64, phi: f64 },
    #[error("precoding has {got} weights for {want} elements")]
    Length { got: usize, want: usize },
    #[error("element index {index} out of range for {count} elements")]
    Index { index: usize, count: usize },
    #[error("pattern table {path}: {msg}")]
    Table { path: String, msg: String },
    #[error("invalid antenna parameter: {0}")]
    Invalid(String),
}

/// Far-field pattern returning `(C_theta, C_phi)` in the local frame.
#[derive(Clone, Debug, PartialEq)]
pub enum AntennaPattern {
    /// `(1, 0)` everywhere.
    IsotropicV,
    /// Power gain `2(q+1) cos^q(theta)` on the front hemisphere, zero behind;
    /// theta-polarized.
    CosinePower { exponent: f64 },
    /// Half-wave dipole along local z.
    Dipole,
    Tabulated(TabulatedPattern),
}

const DIPOLE_GAIN: f64 = 1.643;

impl AntennaPattern {
    /// Cosine-power pattern whose power falls to half at `hpbw_deg / 2`.
    pub fn cosine_power_from_hpbw(hpbw_deg: f64) -> Result<Self, AntennaError> {
        if !(hpbw_deg > 0.0 && hpbw_deg < 180.0) {
            return Err(AntennaError::Invalid(format!("hpbw {hpbw_deg} deg")));
        }
        let half = (hpbw_deg / 2.0).to_radians();
        Ok(Self::CosinePower {
            exponent: 0.5f64.ln() / half.cos().ln(),
        })
    }

    pub fn eval(&self, theta: f64, phi: f64) -> Result<(C64, C64), AntennaError> {
        const TOL: f64 = 1e-12;
        if !(-TOL..=PI + TOL).contains(&theta) || !(-PI - TOL..=PI + TOL).contains(&phi) {
            return Err(AntennaError::AngleRange { theta, phi });
        }
        Ok(self.eval_unchecked(theta.clamp(0.0, PI), phi))
    }

    fn eval_unchecked(&self, theta: f64, phi: f64) -> (C64, C64) {
        match self {
            Self::IsotropicV => (C64::ONE, C64::ZERO),
            Self::CosinePower { exponent } => {
                let c = theta.cos();
                let g = if c > 0.0 {
                    2.0 * (exponent + 1.0) * c.powf(*exponent)
                } else {
                    0.0
                };
                (C64::new(g.sqrt(), 0.0), C64::ZERO)
            }
            Self::Dipole => {
                let s = theta.sin();
                let v = if s < 1e-12 {
                    0.0
                } else {
                    DIPOLE_GAIN.sqrt() * (FRAC_PI_2 * theta.cos()).cos() / s
                };
                (C64::new(v, 0.0), C64::ZERO)
            }
            Self::Tabulated(t) => t.eval(theta, phi),
        }
    }

    /// Pattern toward a local unit direction.
    pub fn eval_dir(&self, k_local: Vec3) -> (C64, C64) {
        let (t, p) = sph_angles(k_local);
        self.eval_unchecked(t, p)
    }
}

/// Regular (theta, phi) grid with bilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedPattern {
    theta: Vec<f64>,
    phi: Vec<f64>,
    /// Row-major over (theta, phi).
    values: Vec<(C64, C64)>,
    phi_periodic: bool,
}

impl TabulatedPattern {
    /// Angles in radians; `values[i * phi.len() + j]` belongs to `(theta[i], phi[j])`.
    pub fn new(theta: Vec<f64>, phi: Vec<f64>, values: Vec<(C64, C64)>) -> Result<Self, AntennaError> {
        let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if theta.is_empty() || phi.is_empty() || !inc(&theta) || !inc(&phi) {
            return Err(AntennaError::Invalid("pattern axes must be non-empty and increasing".into()));
        }
        if values.len() != theta.len() * phi.len() {
            return Err(AntennaError::Invalid("pattern grid is incomplete".into()));
        }
        if values.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(AntennaError::Invalid("non-finite pattern value".into()));
        }
        let phi_periodic = phi.len() > 1 && {
            let step = phi[1] - phi[0];
            (phi[phi.len() - 1] - phi[0] + step - 2.0 * PI).abs() < 1e-6
        };
        Ok(Self {
            theta,
            phi,
            values,
            phi_periodic,
        })
    }

    /// CSV rows `theta_deg, phi_deg, re_ct, im_ct, re_cp, im_cp`; a non-numeric
    /// first row is treated as a header.
    pub fn from_csv(path: &Path) -> Result<Self, AntennaError> {
        let err = |msg: String| AntennaError::Table {
            path: path.display().to_string(),
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| err(e.to_string()))?;
        let mut rows: Vec<[f64; 6]> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let parsed: Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 6 => rows.push([v[0], v[1], v[2], v[3], v[4], v[5]]),
                Err(_) if i == 0 => continue,
                _ => return Err(err(format!("row {} must hold 6 numbers", i + 1))),
            }
        }
        let mut thetas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut phis: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for v in [&mut thetas, &mut phis] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut values = vec![None; thetas.len() * phis.len()];
        for r in &rows {
            let i = thetas.binary_search_by(|x| x.total_cmp(&r[0])).unwrap();
            let j = phis.binary_search_by(|x| x.total_cmp(&r[1])).unwrap();
            values[i * phis.len() + j] = Some((C64::new(r[2], r[3]), C64::new(r[4], r[5])));
        }
        let values: Option<Vec<_>> = values.into_iter().collect();
        let values = values.ok_or_else(|| err("rows do not form a full theta x phi grid".into()))?;
        Self::new(
            thetas.iter().map(|d| d.to_radians()).collect(),
            phis.iter().map(|d| d.to_radians()).collect(),
            values,
        )
    }

    fn locate(axis: &[f64], x: f64) -> (usize, usize, f64) {
        if axis.len() == 1 || x <= axis[0] {
            return (0, 0, 0.0);
        }
        let n = axis.len();
        if x >= axis[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= x);
        let lo = hi - 1;
        (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
    }

    fn eval(&self, theta: f64, phi: f64) -> (C64, C64) {
        let (i0, i1, ti) = Self::locate(&self.theta, theta);
        let np = self.phi.len();
        let (j0, j1, tj) = if self.phi_periodic && (phi < self.phi[0] || phi > self.phi[np - 1]) {
            // Interpolate across the seam between the last and first column.
            let step = self.phi[1] - self.phi[0];
            let mut d = phi - self.phi[np - 1];
            if d < 0.0 {
                d += 2.0 * PI;
            }
            (np - 1, 0, (d / step).clamp(0.0, 1.0))
        } else {
            Self::locate(&self.phi, phi)
        };
        let at = |i: usize, j: usize| self.values[i * np + j];
        let mix = |a: (C64, C64), b: (C64, C64), t: f64| {
            (a.0.scale(1.0 - t) + b.0.scale(t), a.1.scale(1.0 - t) + b.1.scale(t))
        };
        let lo = mix(at(i0, j0), at(i0, j1), tj);
        let hi = mix(at(i1, j0), at(i1, j1), tj);
        mix(lo, hi, ti)
    }
}

/// Position plus orientation; the rotation's columns are the local axes in
/// world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Mat3,
}

impl Pose {
    pub fn new(position: Vec3, rotation: Mat3) -> Self {
        Self { position, rotation }
    }

    pub fn at(position: Vec3) -> Self {
        Self::new(position, Mat3::identity())
    }

    /// Local +z along `boresight`, local +y in the plane of `up` and `boresight`.
    pub fn look_at(position: Vec3, boresight: Vec3, up: Vec3) -> Self {
        let z = boresight.normalized();
        let mut x = up.cross(z);
        if x.norm() < 1e-9 {
            x = z.any_perpendicular();
        }
        let x = x.normalized();
        let y = z.cross(x);
        Self::new(position, Mat3::from_cols(x, y, z))
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(v)
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }
}

/// Pattern value toward world direction `k` (pointing away from the antenna),
/// expressed in the global `(theta-hat, phi-hat)` basis of `k`.
pub fn pattern_world(pattern: &AntennaPattern, pose: &Pose, k: Vec3) -> [C64; 2] {
    let kl = pose.to_local(k);
    let (ct, cp) = pattern.eval_dir(kl);
    let (tl, pl) = sph_basis(kl);
    let (tw, pw) = (pose.to_world(tl), pose.to_world(pl));
    let (tg, pg) = sph_basis(k);
    // Re and Im parts of the field vector are rotated separately.
    let re = tw.scale(ct.re) + pw.scale(cp.re);
    let im = tw.scale(ct.im) + pw.scale(cp.im);
    [C64::new(re.dot(tg), im.dot(tg)), C64::new(re.dot(pg), im.dot(pg))]
}

/// Element positions relative to the array centre, in the antenna frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub offsets: Vec<Vec3>,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(offsets: Vec<Vec3>, wavelength: f64) -> Result<Self, AntennaError> {
        if !(wavelength > 0.0) || offsets.is_empty() || offsets.iter().any(|d| !d.is_finite()) {
            return Err(AntennaError::Invalid("array needs elements, finite offsets and wavelength > 0".into()));
        }
        Ok(Self { offsets, wavelength })
    }

    pub fn single(wavelength: f64) -> Self {
        Self {
            offsets: vec![Vec3::ZERO],
            wavelength,
        }
    }

    /// `n` elements along local x.
    pub fn line(n: usize, spacing: f64, wavelength: f64) -> Self {
        let c = (n as f64 - 1.0) / 2.0;
        Self {
            offsets: (0..n).map(|i| Vec3::new((i as f64 - c) * spacing, 0.0, 0.0)).collect(),
            wavelength,
        }
    }

    /// `nx` x `ny` grid in the local z = 0 plane, x index fastest.
    pub fn ura(nx: usize, ny: usize, spacing: f64, wavelength: f64) -> Self {
        let (cx, cy) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);
        let mut offsets = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                offsets.push(Vec3::new((i as f64 - cx) * spacing, (j as f64 - cy) * spacing, 0.0));
            }
        }
        Self { offsets, wavelength }
    }

    /// 4 x 4 at half-wavelength spacing.
    pub fn default_ura(wavelength: f64) -> Self {
        Self::ura(4, 4, wavelength / 2.0, wavelength)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Precoding {
    pub weights: Vec<C64>,
}

impl Precoding {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![C64::ONE; n],
        }
    }

    /// Conjugate-matched to direction `k0` in the array frame.
    pub fn matched(array: &ArrayGeometry, k0: Vec3) -> Self {
        let kw = array.wavenumber();
        Self {
            weights: array.offsets.iter().map(|d| C64::cis(-kw * d.dot(k0))).collect(),
        }
    }

    /// Element-wise product with a real taper.
    pub fn tapered(mut self, taper: &[f64]) -> Self {
        for (w, t) in self.weights.iter_mut().zip(taper) {
            *w = w.scale(*t);
        }
        self
    }
}

/// `sum_n w_n exp(+j 2pi/lambda d_n . k)` with `k` in the array frame.
pub fn tx_array_weight(array: &ArrayGeometry, w: &Precoding, k: Vec3) -> Result<C64, AntennaError> {
    if w.weights.len() != array.len() {
        return Err(AntennaError::Length {
            got: w.weights.len(),
            want: array.len(),
        });
    }
    let kw = array.wavenumber();
    let mut acc = C64::ZERO;
    for (d, wn) in array.offsets.iter().zip(&w.weights) {
        acc += *wn * C64::cis(kw * d.dot(k));
    }
    Ok(acc)
}

/// `exp(-j 2pi/lambda d_m . k)` with `k` in the array frame.
pub fn rx_element_phase(array: &ArrayGeometry, m: usize, k: Vec3) -> Result<C64, AntennaError> {
    let d = array.offsets.get(m).ok_or(AntennaError::Index {
        index: m,
        count: array.len(),
    })?;
    Ok(C64::cis(-array.wavenumber() * d.dot(k)))
}

pub fn steering_vector(array: &ArrayGeometry, theta: f64, phi: f64) -> Vec<C64> {
    let k = sph_dir(theta, phi);
    let kw = array.wavenumber();
    array.offsets.iter().map(|d| C64::cis(-kw * d.dot(k))).collect()
}

/// Symmetric raised-cosine window; the endpoints are zero for `m > 1`.
pub fn hanning_taper(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (m as f64 - 1.0)).cos())
        .collect()
}

/// Outer product of 1-D windows matching [`ArrayGeometry::ura`] ordering.
pub fn hanning_taper_2d(nx: usize, ny: usize) -> Vec<f64> {
    let (wx, wy) = (hanning_taper(nx), hanning_taper(ny));
    let mut out = Vec::with_capacity(nx * ny);
    for b in &wy {
        for a in &wx {
            out.push(a * b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gauss_legendre_on;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 0.010_706_9;

    fn sphere_mean(f: impl Fn(f64, f64) -> f64) -> f64 {
        let tr = gauss_legendre_on(200, 0.0, PI);
        let pr = gauss_legendre_on(200, -PI, PI);
        let mut acc = 0.0;
        for &(t, wt) in &tr {
            for &(p, wp) in &pr {
                acc += wt * wp * t.sin() * f(t, p);
            }
        }
        acc / (4.0 * PI)
    }

    #[test]
    fn isotropic_is_unit_v_pol() {
        let p = AntennaPattern::IsotropicV;
        assert_eq!(p.eval(0.3, -2.0).unwrap(), (C64::ONE, C64::ZERO));
        let mean = sphere_mean(|t, ph| p.eval(t, ph).unwrap().0.norm_sqr());
        assert_relative_eq!(mean, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn patterns_have_unit_mean_power() {
        for p in [AntennaPattern::CosinePower { exponent: 7.3 }, AntennaPattern::Dipole] {
            let mean = sphere_mean(|t, ph| {
                let (a, b) = p.eval(t, ph).unwrap();
                a.norm_sqr() + b.norm_sqr()
            });
            assert_relative_eq!(mean, 1.0, epsilon = 2e-3);
        }
    }

    #[test]
    fn dipole_peaks_at_broadside() {
        let p = AntennaPattern::Dipole;
        let (peak, cross) = p.eval(FRAC_PI_2, 0.4).unwrap();
        assert_eq!(cross, C64::ZERO);
        assert_relative_eq!(peak.re, DIPOLE_GAIN.sqrt(), epsilon = 1e-15);
        for i in 0..=180 {
            let (c, _) = p.eval((i as f64).to_radians(), 0.4).unwrap();
            assert!(c.abs() <= peak.abs() + 1e-15);
        }
    }

    #[test]
    fn out_of_range_angles_rejected() {
        let p = AntennaPattern::IsotropicV;
        assert!(p.eval(0.0, 0.0).is_ok());
        assert!(matches!(p.eval(2.0 * PI - 1e-3, 0.0), Err(AntennaError::AngleRange { .. })));
        assert!(p.eval(1.0, 3.5).is_err());
    }

    #[test]
    fn cosine_power_hpbw() {
        let p = AntennaPattern::cosine_power_from_hpbw(20.0).unwrap();
        let g = |t: f64| p.eval(t, 0.0).unwrap().0.norm_sqr();
        assert_relative_eq!(g(10f64.to_radians()) / g(0.0), 0.5, epsilon = 1e-12);
        assert!(AntennaPattern::cosine_power_from_hpbw(0.0).is_err());
    }

    #[test]
    fn tabulated_bilinear_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pat.csv");
        let mut s = String::from("theta_deg,phi_deg,re_ct,im_ct,re_cp,im_cp\n");
        for t in [0.0, 90.0, 180.0] {
            for p in [-180.0, -90.0, 0.0, 90.0] {
                // Linear in both angles so bilinear interpolation is exact.
                s += &format!("{t},{p},{},{},0,{}\n", t / 90.0, p / 90.0, 1.0);
            }
        }
        std::fs::write(&path, s).unwrap();
        let tab = AntennaPattern::Tabulated(TabulatedPattern::from_csv(&path).unwrap());
        let (ct, cp) = tab.eval(45f64.to_radians(), 45f64.to_radians()).unwrap();
        assert_relative_eq!(ct.re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(ct.im, 0.5, epsilon = 1e-12);
        assert_relative_eq!(cp.im, 1.0, epsilon = 1e-12);
        // Across the seam phi = 135 deg sits halfway between 90 and -180.
        let (ct, _) = tab.eval(0.0, 135f64.to_radians()).unwrap();
        assert_relative_eq!(ct.im, 0.5 * (1.0 - 2.0), epsilon = 1e-12);
    }

    #[test]
    fn tabulated_incomplete_grid_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,0,1,0,0,0\n0,90,1,0,0,0\n90,0,1,0,0,0\n").unwrap();
        assert!(TabulatedPattern::from_csv(&path).is_err());
    }

    #[test]
    fn single_element_weight_is_one() {
        let a = ArrayGeometry::single(LAMBDA);
        let w = Precoding::uniform(1);
        for k in [Vec3::X, Vec3::Y, sph_dir(0.3, 2.0)] {
            assert_eq!(tx_array_weight(&a, &w, k).unwrap(), C64::ONE);
        }
    }

    #[test]
    fn broadside_line_array() {
        let a = ArrayGeometry::line(4, LAMBDA / 2.0, LAMBDA);
        let w = Precoding::uniform(4);
        let v = tx_array_weight(&a, &w, Vec3::Y).unwrap();
        assert_relative_eq!(v.re, 4.0, epsilon = 1e-12);
        assert_relative_eq!(v.im, 0.0, epsilon = 1e-12);
        assert!(tx_array_weight(&a, &Precoding::uniform(3), Vec3::Y).is_err());
    }

    #[test]
    fn matched_precoding_peaks_at_target() {
        let a = ArrayGeometry::line(4, LAMBDA / 2.0, LAMBDA);
        let k0 = sph_dir(FRAC_PI_2, 0.5);
        let w = Precoding::matched(&a, k0);
        assert_relative_eq!(tx_array_weight(&a, &w, k0).unwrap().abs(), 4.0, epsilon = 1e-12);
        // Scan the horizontal plane on a 1 degree grid.
        let best = (-180..180)
            .map(|d| {
                let k = sph_dir(FRAC_PI_2, (d as f64).to_radians());
                (tx_array_weight(&a, &w, k).unwrap().abs(), d)
            })
            .fold((0.0, 0), |b, x| if x.0 > b.0 { x } else { b });
        assert_relative_eq!(best.0, 4.0, epsilon = 1e-3);
        // A line array cannot tell phi from -phi.
        assert!(((best.1 as f64).abs() - 0.5f64.to_degrees()).abs() <= 1.0);
    }

    #[test]
    fn rx_phase_cases() {
        let a = ArrayGeometry::new(vec![Vec3::ZERO, Vec3::new(LAMBDA / 2.0, 0.0, 0.0)], LAMBDA).unwrap();
        assert_eq!(rx_element_phase(&a, 0, sph_dir(0.4, 1.0)).unwrap(), C64::ONE);
        let p = rx_element_phase(&a, 1, Vec3::X).unwrap();
        assert_relative_eq!(p.re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(p.im, 0.0, epsilon = 1e-12);
        assert!(matches!(rx_element_phase(&a, 2, Vec3::X), Err(AntennaError::Index { .. })));
    }

    #[test]
    fn steering_vector_cases() {
        let a = ArrayGeometry::default_ura(LAMBDA);
        assert!(steering_vector(&a, 0.0, 0.0).iter().all(|s| (*s - C64::ONE).abs() < 1e-12));
        assert_eq!(steering_vector(&ArrayGeometry::single(LAMBDA), 1.0, 2.0), vec![C64::ONE]);
        let (t, p) = (30f64.to_radians(), 20f64.to_radians());
        let sv = steering_vector(&a, t, p);
        for (m, d) in a.offsets.iter().enumerate() {
            let phase = -2.0 * PI / LAMBDA * (d.x * t.sin() * p.cos() + d.y * t.sin() * p.sin());
            assert_relative_eq!(sv[m].re, phase.cos(), epsilon = 1e-12);
            assert_relative_eq!(sv[m].im, phase.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn hanning_windows() {
        assert_eq!(hanning_taper(1), vec![1.0]);
        let w4 = hanning_taper(4);
        assert_eq!(w4[0], w4[3]);
        assert_relative_eq!(w4[1], w4[2], epsilon = 1e-15);
        let w8 = hanning_taper(8);
        for (n, w) in w8.iter().enumerate() {
            let want = (PI * n as f64 / 7.0).sin().powi(2);
            assert_relative_eq!(*w, want, epsilon = 1e-12);
        }
        let w2d = hanning_taper_2d(3, 3);
        assert_eq!(w2d[4], 1.0);
        assert_eq!(w2d.iter().filter(|&&x| x == 0.0).count(), 8);
    }

    #[test]
    fn look_at_frame() {
        let pose = Pose::look_at(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0), Vec3::Z);
        let z = pose.rotation.col(2);
        assert_relative_eq!((z - Vec3::new(1.0, 1.0, 0.0).normalized()).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(pose.rotation.col(1).dot(Vec3::Z), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pattern_world_identity_pose() {
        let pose = Pose::at(Vec3::ZERO);
        let k = sph_dir(1.1, -0.7);
        let c = pattern_world(&AntennaPattern::IsotropicV, &pose, k);
        assert_relative_eq!(c[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c[1].abs(), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(t in 0.0..PI, p in -PI..PI) {
            for s in steering_vector(&ArrayGeometry::default_ura(LAMBDA), t, p) {
                prop_assert!((s.abs() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn rx_phase_is_conjugate_of_positive_phase(x in -0.05..0.05f64, y in -0.05..0.05f64, z in -0.05..0.05f64, t in 0.0..PI, p in -PI..PI) {
            let d = Vec3::new(x, y, z);
            let a = ArrayGeometry::new(vec![d], LAMBDA).unwrap();
            let k = sph_dir(t, p);
            let got = rx_element_phase(&a, 0, k).unwrap();
            let want = C64::cis(2.0 * PI / LAMBDA * d.dot(k)).conj();
            prop_assert!((got - want).abs() < 1e-12);
            prop_assert!((got.abs() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pattern_world_preserves_power(t in 0.01..3.13f64, p in -3.1..3.1f64, yaw in -3.0..3.0f64, tilt in -1.5..1.5f64) {
            let pose = Pose::new(Vec3::ZERO, Mat3::from_euler_xyz(tilt, 0.3, yaw));
            let k = sph_dir(t, p);
            let pat = AntennaPattern::Dipole;
            let c = pattern_world(&pat, &pose, k);
            let (a, b) = pat.eval_dir(pose.to_local(k));
            let want = a.norm_sqr() + b.norm_sqr();
            prop_assert!((c[0].norm_sqr() + c[1].norm_sqr() - want).abs() < 1e-9 * (1.0 + want));
        }
    }
}
