//! Small numeric toolkit shared by every module.
//!
//! All geometric and electromagnetic code is written once, generically over
//! [`Real`], and instantiated either with plain `f64` (fast forward tracing)
//! or with [`crate::autodiff::Var`] (gradient passes). The vector, complex and
//! matrix types below are deliberately minimal so they can carry either scalar.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Scalar abstraction over `f64` and tape-recorded variables.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lift a constant (no derivative).
    fn cst(v: f64) -> Self;
    /// Primal value.
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn acos(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
    fn sqr(self) -> Self {
        self * self
    }
    /// `c - self`
    fn rsub(self, c: f64) -> Self {
        -self + c
    }
    fn sigmoid(self) -> Self {
        ((-self).exp() + 1.0).recip()
    }
    /// Same value, derivative cut.
    fn detach(self) -> Self {
        Self::cst(self.val())
    }
    /// Whether derivatives flow through this value.
    fn is_tracked(self) -> bool {
        false
    }
    /// A value with caller-supplied partials with respect to `inputs`.
    fn linearized(value: f64, _inputs: &[(Self, f64)]) -> Self {
        Self::cst(value)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn acos(self) -> Self {
        f64::acos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sigmoid(self) -> Self {
        1.0 / (1.0 + (-self).exp())
    }
}

/// 3-vector, generic over the scalar.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<R = f64> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R> Vec3<R> {
    pub const fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }
}

impl Vec3<f64> {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);
    pub const X: Self = Self::new(1.0, 0.0, 0.0);
    pub const Y: Self = Self::new(0.0, 1.0, 0.0);
    pub const Z: Self = Self::new(0.0, 0.0, 1.0);

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Lift into another scalar type as constants.
    pub fn lift<R: Real>(self) -> Vec3<R> {
        Vec3::new(R::cst(self.x), R::cst(self.y), R::cst(self.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_elem(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Any unit vector perpendicular to `self` (assumed unit).
    pub fn any_perpendicular(self) -> Self {
        let helper = if self.x.abs() < 0.9 { Self::X } else { Self::Y };
        self.cross(helper).normalized()
    }
}

impl<R: Real> Vec3<R> {
    pub fn splat(v: R) -> Self {
        Self::new(v, v, v)
    }
    pub fn dot(self, o: Self) -> R {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
    pub fn norm_sqr(self) -> R {
        self.dot(self)
    }
    pub fn norm(self) -> R {
        self.norm_sqr().sqrt()
    }
    pub fn normalized(self) -> Self {
        self * self.norm().recip()
    }
    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
    pub fn value(self) -> Vec3<f64> {
        Vec3::new(self.x.val(), self.y.val(), self.z.val())
    }
    pub fn detach(self) -> Self {
        Self::new(self.x.detach(), self.y.detach(), self.z.detach())
    }
}

impl<R: Real> Add for Vec3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> AddAssign for Vec3<R> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<R: Real> Sub for Vec3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> Neg for Vec3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<R: Real> Mul<R> for Vec3<R> {
    type Output = Self;
    fn mul(self, s: R) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Complex number, generic over the scalar.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Cx<R = f64> {
    pub re: R,
    pub im: R,
}

pub type C64 = Cx<f64>;

impl<R> Cx<R> {
    pub const fn new(re: R, im: R) -> Self {
        Self { re, im }
    }
}

impl C64 {
    pub const ZERO: Self = Self::new(0.0, 0.0);
    pub const ONE: Self = Self::new(1.0, 0.0);

    pub fn lift<R: Real>(self) -> Cx<R> {
        Cx::new(R::cst(self.re), R::cst(self.im))
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<R: Real> Cx<R> {
    pub fn real(re: R) -> Self {
        Self::new(re, R::zero())
    }
    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero())
    }
    pub fn one() -> Self {
        Self::new(R::one(), R::zero())
    }
    /// `exp(j * phase)`
    pub fn cis(phase: R) -> Self {
        Self::new(phase.cos(), phase.sin())
    }
    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }
    pub fn norm_sqr(self) -> R {
        self.re * self.re + self.im * self.im
    }
    pub fn abs(self) -> R {
        self.norm_sqr().sqrt()
    }
    pub fn scale(self, s: R) -> Self {
        Self::new(self.re * s, self.im * s)
    }
    pub fn scale_f64(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
    /// Principal square root (non-negative real part).
    pub fn sqrt(self) -> Self {
        let r = self.abs();
        if r.val() == 0.0 {
            return Self::zero();
        }
        // Re = sqrt((r + re)/2) is stable when re >= 0; otherwise use the
        // imaginary part to avoid cancellation.
        if self.re.val() >= 0.0 {
            let t = ((r + self.re) * 0.5).sqrt();
            Self::new(t, self.im / (t * 2.0))
        } else {
            let t = ((r - self.re) * 0.5).sqrt();
            let t = if self.im.val() < 0.0 { -t } else { t };
            Self::new(self.im / (t * 2.0), t)
        }
    }
    pub fn value(self) -> C64 {
        Cx::new(self.re.val(), self.im.val())
    }
}

impl<R: Real> Add for Cx<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl<R: Real> AddAssign for Cx<R> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<R: Real> Sub for Cx<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl<R: Real> Neg for Cx<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl<R: Real> Mul for Cx<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

impl<R: Real> Div for Cx<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        Self::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }
}

/// 2x2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<R = f64> {
    pub m: [[Cx<R>; 2]; 2],
}

impl<R: Real> Mat2<R> {
    pub fn new(a: Cx<R>, b: Cx<R>, c: Cx<R>, d: Cx<R>) -> Self {
        Self { m: [[a, b], [c, d]] }
    }
    pub fn zero() -> Self {
        Self::new(Cx::zero(), Cx::zero(), Cx::zero(), Cx::zero())
    }
    pub fn identity() -> Self {
        Self::new(Cx::one(), Cx::zero(), Cx::zero(), Cx::one())
    }
    pub fn diag(a: Cx<R>, d: Cx<R>) -> Self {
        Self::new(a, Cx::zero(), Cx::zero(), d)
    }
    pub fn from_real(r: [[R; 2]; 2]) -> Self {
        Self::new(
            Cx::real(r[0][0]),
            Cx::real(r[0][1]),
            Cx::real(r[1][0]),
            Cx::real(r[1][1]),
        )
    }
    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        out
    }
    pub fn mul_vec(&self, v: [Cx<R>; 2]) -> [Cx<R>; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
    pub fn scale(&self, s: R) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e = e.scale(s);
            }
        }
        out
    }
    /// Sum of squared entry magnitudes.
    pub fn frobenius_sqr(&self) -> R {
        let mut acc = R::zero();
        for row in &self.m {
            for e in row {
                acc = acc + e.norm_sqr();
            }
        }
        acc
    }
    pub fn value(&self) -> Mat2<f64> {
        Mat2::new(
            self.m[0][0].value(),
            self.m[0][1].value(),
            self.m[1][0].value(),
            self.m[1][1].value(),
        )
    }
}

impl Mat2<f64> {
    pub fn lift<R: Real>(&self) -> Mat2<R> {
        Mat2::new(
            self.m[0][0].lift(),
            self.m[0][1].lift(),
            self.m[1][0].lift(),
            self.m[1][1].lift(),
        )
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        // Eigenvalues of A^H A.
        let [[a, b], [c, d]] = self.m;
        let p = a.norm_sqr() + c.norm_sqr();
        let q = b.norm_sqr() + d.norm_sqr();
        let off = a.conj() * b + c.conj() * d;
        let tr = p + q;
        let det = p * q - off.norm_sqr();
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|e| e.is_finite())
    }
}

/// 3x3 real matrix, row-major. Used for poses and rigid transforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<R = f64> {
    pub r: [[R; 3]; 3],
}

impl<R: Real> Mat3<R> {
    pub fn identity() -> Self {
        let (o, z) = (R::one(), R::zero());
        Self {
            r: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }
    pub fn from_cols(a: Vec3<R>, b: Vec3<R>, c: Vec3<R>) -> Self {
        Self {
            r: [[a.x, b.x, c.x], [a.y, b.y, c.y], [a.z, b.z, c.z]],
        }
    }
    pub fn col(&self, j: usize) -> Vec3<R> {
        Vec3::new(self.r[0][j], self.r[1][j], self.r[2][j])
    }
    pub fn transpose(&self) -> Self {
        let r = self.r;
        Self {
            r: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }
    pub fn mul_vec(&self, v: Vec3<R>) -> Vec3<R> {
        let r = &self.r;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = Self::identity();
        for i in 0..3 {
            for j in 0..3 {
                out.r[i][j] =
                    self.r[i][0] * o.r[0][j] + self.r[i][1] * o.r[1][j] + self.r[i][2] * o.r[2][j];
            }
        }
        out
    }
    pub fn rot_x(a: R) -> Self {
        let (s, c, o, z) = (a.sin(), a.cos(), R::one(), R::zero());
        Self {
            r: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }
    pub fn rot_y(a: R) -> Self {
        let (s, c, o, z) = (a.sin(), a.cos(), R::one(), R::zero());
        Self {
            r: [[c, z, s], [z, o, z], [-s, z, c]],
        }
    }
    pub fn rot_z(a: R) -> Self {
        let (s, c, o, z) = (a.sin(), a.cos(), R::one(), R::zero());
        Self {
            r: [[c, -s, z], [s, c, z], [z, z, o]],
        }
    }
    /// `Rz(c) * Ry(b) * Rx(a)`
    pub fn from_euler_xyz(a: R, b: R, c: R) -> Self {
        Self::rot_z(c).mul_mat(&Self::rot_y(b)).mul_mat(&Self::rot_x(a))
    }
}

impl Mat3<f64> {
    pub fn lift<R: Real>(&self) -> Mat3<R> {
        let mut out = Mat3::<R>::identity();
        for i in 0..3 {
            for j in 0..3 {
                out.r[i][j] = R::cst(self.r[i][j]);
            }
        }
        out
    }
}

/// Unit direction for zenith angle `theta` and azimuth `phi`.
pub fn sph_dir<R: Real>(theta: R, phi: R) -> Vec3<R> {
    let st = theta.sin();
    Vec3::new(st * phi.cos(), st * phi.sin(), theta.cos())
}

/// Spherical unit vectors (theta-hat, phi-hat) for a unit direction.
///
/// At the poles the azimuth is taken as zero.
pub fn sph_basis<R: Real>(k: Vec3<R>) -> (Vec3<R>, Vec3<R>) {
    let rho2 = k.x * k.x + k.y * k.y;
    if rho2.val() < 1e-24 {
        let sgn = if k.z.val() >= 0.0 { 1.0 } else { -1.0 };
        let t = Vec3::new(R::cst(sgn), R::zero(), R::zero());
        let p = Vec3::new(R::zero(), R::one(), R::zero());
        return (t, p);
    }
    let rho = rho2.sqrt();
    let (cp, sp) = (k.x / rho, k.y / rho);
    let theta_hat = Vec3::new(k.z * cp, k.z * sp, -rho);
    let phi_hat = Vec3::new(-sp, cp, R::zero());
    (theta_hat, phi_hat)
}

/// Zenith and azimuth angles (radians) of a unit vector.
pub fn sph_angles(k: Vec3<f64>) -> (f64, f64) {
    (k.z.clamp(-1.0, 1.0).acos(), k.y.atan2(k.x))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    x.iter().zip(&w).map(|(&xi, &wi)| (c + h * xi, h * wi)).collect()
}

pub fn db10(v: f64) -> f64 {
    10.0 * v.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 128] {
            let rule = gauss_legendre_on(n, 0.0, 2.0);
            let deg = 2 * n - 1;
            let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            let want = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn complex_sqrt_principal_branch() {
        for &(re, im) in &[(4.0, 0.0), (-4.0, 0.0), (3.0, -4.0), (-3.0, -4.0), (0.0, 2.0)] {
            let z = C64::new(re, im);
            let s = z.sqrt();
            let back = s * s;
            assert_relative_eq!(back.re, re, epsilon = 1e-12);
            assert_relative_eq!(back.im, im, epsilon = 1e-12);
            assert!(s.re >= 0.0);
        }
    }

    #[test]
    fn spherical_basis_is_orthonormal() {
        let k = sph_dir(0.7, -2.1);
        let (t, p) = sph_basis(k);
        assert_relative_eq!(t.dot(p), 0.0, epsilon = 1e-14);
        assert_relative_eq!(t.dot(k), 0.0, epsilon = 1e-14);
        assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-14);
        // theta-hat x phi-hat = r-hat
        let r = t.cross(p);
        assert_relative_eq!((r - k).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn operator_norm_of_unitary_is_one() {
        let m = Mat2::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.8), C64::new(0.6, 0.0));
        assert_relative_eq!(m.operator_norm(), 1.0, epsilon = 1e-12);
    }
}
