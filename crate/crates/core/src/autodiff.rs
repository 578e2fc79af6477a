//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every differentiable scalar is a [`Var`]: a primal value plus an optional
//! node on a [`Tape`]. Operations between vars record their local partials
//! eagerly; [`Tape::backward`] then sweeps the tape once in reverse. Vars
//! without a node are constants and never touch the tape, so generic code
//! instantiated with mostly-constant inputs only records the live subgraph.
//!
//! A tape is single-threaded (`!Sync`); parallel passes give each worker its
//! own tape and combine partial gradients afterwards.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::math::Real;

#[derive(Debug, Error, PartialEq)]
pub enum AdError {
    #[error("output is not recorded on this tape")]
    NotOnTape,
    #[error("{op} undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("division by zero")]
    DivideByZero,
    #[error("non-finite function value {0} during finite-difference check")]
    NonFinite(f64),
    #[error("input count mismatch for {op}: got {got}")]
    Arity { op: &'static str, got: usize },
}

#[derive(Default)]
struct Inner {
    // Edges of node i live in offsets[i]..offsets[i + 1].
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

/// Append-only record of primitive operations.
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                offsets: vec![0],
                ..Default::default()
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all recorded nodes. Requires that no var borrows the tape.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.offsets.clear();
        inner.offsets.push(0);
        inner.parents.clear();
        inner.partials.clear();
    }

    fn push(&self, edges: &[(u32, f64)]) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let id = (inner.offsets.len() - 1) as u32;
        for &(p, d) in edges {
            inner.parents.push(p);
            inner.partials.push(d);
        }
        let end = inner.parents.len() as u32;
        inner.offsets.push(end);
        id
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let id = self.push(&[]);
        Var {
            value,
            node: Some((self, id)),
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Record an n-ary node with caller-supplied value and partials.
    ///
    /// Constant inputs are skipped. The result is a constant when no input is
    /// on this tape.
    pub fn custom<'t>(&'t self, value: f64, inputs: &[(Var<'t>, f64)]) -> Var<'t> {
        let mut edges = Vec::with_capacity(inputs.len());
        for (v, d) in inputs {
            if let Some((t, id)) = v.node {
                debug_assert!(std::ptr::eq(t, self), "var from a different tape");
                edges.push((id, *d));
            }
        }
        if edges.is_empty() {
            return Var::constant(value);
        }
        let id = self.push(&edges);
        Var {
            value,
            node: Some((self, id)),
        }
    }

    /// `sum_i w_i * x_i` as a single node.
    pub fn linear_combination<'t>(&'t self, terms: &[(Var<'t>, f64)]) -> Var<'t> {
        let value = terms.iter().map(|(v, w)| v.value * w).sum();
        self.custom(value, terms)
    }

    /// Record a named primitive with domain checking.
    pub fn record<'t>(&'t self, op: Primitive, inputs: &[Var<'t>]) -> Result<Var<'t>, AdError> {
        let arity = |n: usize| {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(AdError::Arity {
                    op: op.name(),
                    got: inputs.len(),
                })
            }
        };
        match op {
            Primitive::Add => {
                arity(2)?;
                Ok(inputs[0] + inputs[1])
            }
            Primitive::Sub => {
                arity(2)?;
                Ok(inputs[0] - inputs[1])
            }
            Primitive::Mul => {
                arity(2)?;
                Ok(inputs[0] * inputs[1])
            }
            Primitive::Div => {
                arity(2)?;
                if inputs[1].value == 0.0 {
                    return Err(AdError::DivideByZero);
                }
                Ok(inputs[0] / inputs[1])
            }
            Primitive::Neg => {
                arity(1)?;
                Ok(-inputs[0])
            }
            Primitive::Exp => {
                arity(1)?;
                Ok(inputs[0].exp())
            }
            Primitive::Ln => {
                arity(1)?;
                if inputs[0].value <= 0.0 {
                    return Err(AdError::Domain {
                        op: "ln",
                        value: inputs[0].value,
                    });
                }
                Ok(inputs[0].ln())
            }
            Primitive::Sin => {
                arity(1)?;
                Ok(inputs[0].sin())
            }
            Primitive::Cos => {
                arity(1)?;
                Ok(inputs[0].cos())
            }
            Primitive::Sqrt => {
                arity(1)?;
                if inputs[0].value <= 0.0 {
                    return Err(AdError::Domain {
                        op: "sqrt",
                        value: inputs[0].value,
                    });
                }
                Ok(inputs[0].sqrt())
            }
            Primitive::Powf(p) => {
                arity(1)?;
                if inputs[0].value < 0.0 || (inputs[0].value == 0.0 && p < 1.0) {
                    return Err(AdError::Domain {
                        op: "powf",
                        value: inputs[0].value,
                    });
                }
                Ok(inputs[0].powf(p))
            }
            Primitive::Abs2 => {
                arity(2)?;
                let (re, im) = (inputs[0], inputs[1]);
                Ok(re * re + im * im)
            }
            Primitive::Dot => {
                if inputs.len() % 2 != 0 {
                    return Err(AdError::Arity {
                        op: op.name(),
                        got: inputs.len(),
                    });
                }
                let n = inputs.len() / 2;
                let (a, b) = inputs.split_at(n);
                let value = a.iter().zip(b).map(|(x, y)| x.value * y.value).sum();
                let mut edges = Vec::with_capacity(inputs.len());
                edges.extend(a.iter().zip(b).map(|(x, y)| (*x, y.value)));
                edges.extend(a.iter().zip(b).map(|(x, y)| (*y, x.value)));
                Ok(self.custom(value, &edges))
            }
        }
    }

    /// Reverse sweep from a single scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, AdError> {
        match output.node {
            Some((t, _)) if std::ptr::eq(t, self) => Ok(self.backward_seeded(&[(output, 1.0)])),
            _ => Err(AdError::NotOnTape),
        }
    }

    /// Reverse sweep with arbitrary output adjoints (vector-Jacobian product).
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Gradients {
        let inner = self.inner.borrow();
        let n = inner.offsets.len() - 1;
        let mut adj = vec![0.0; n];
        for (v, s) in seeds {
            if let Some((t, id)) = v.node {
                if std::ptr::eq(t, self) {
                    adj[id as usize] += s;
                }
            }
        }
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (inner.offsets[i] as usize, inner.offsets[i + 1] as usize);
            for e in lo..hi {
                adj[inner.parents[e] as usize] += a * inner.partials[e];
            }
        }
        Gradients {
            tape: self as *const Tape as usize,
            adjoints: adj,
        }
    }
}

/// Operations accepted by [`Tape::record`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Powf(f64),
    /// `re^2 + im^2` of a complex number given as `[re, im]`.
    Abs2,
    /// Dot product of the first and second halves of the inputs.
    Dot,
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Neg => "neg",
            Primitive::Exp => "exp",
            Primitive::Ln => "ln",
            Primitive::Sin => "sin",
            Primitive::Cos => "cos",
            Primitive::Sqrt => "sqrt",
            Primitive::Powf(_) => "powf",
            Primitive::Abs2 => "abs2",
            Primitive::Dot => "dot",
        }
    }
}

/// Adjoints produced by a reverse sweep.
#[derive(Clone, Debug)]
pub struct Gradients {
    tape: usize,
    adjoints: Vec<f64>,
}

impl Gradients {
    /// d(output)/d(v); zero for constants and unused nodes.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        match v.node {
            Some((t, id)) if t as *const Tape as usize == self.tape => self.adjoints[id as usize],
            _ => 0.0,
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.adjoints.len()
    }
}

/// Differentiable scalar: primal value and its tape node, if any.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    value: f64,
    node: Option<(&'t Tape, u32)>,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some((_, id)) => write!(f, "Var({} @{})", self.value, id),
            None => write!(f, "Var({} const)", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Self { value, node: None }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    pub fn tape(&self) -> Option<&'t Tape> {
        self.node.map(|(t, _)| t)
    }

    fn unary(self, value: f64, d: f64) -> Self {
        match self.node {
            None => Self::constant(value),
            Some((t, id)) => Self {
                value,
                node: Some((t, t.push(&[(id, d)]))),
            },
        }
    }

    fn binary(self, o: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.node, o.node) {
            (None, None) => Self::constant(value),
            (Some((t, a)), None) => Self {
                value,
                node: Some((t, t.push(&[(a, da)]))),
            },
            (None, Some((t, b))) => Self {
                value,
                node: Some((t, t.push(&[(b, db)]))),
            },
            (Some((t, a)), Some((_, b))) => Self {
                value,
                node: Some((t, t.push(&[(a, da), (b, db)]))),
            },
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        let q = self.value * inv;
        self.binary(o, q, inv, -q * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.unary(self.value + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.unary(self.value - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.unary(self.value * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.unary(self.value / c, 1.0 / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(self - v.value, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn is_tracked(self) -> bool {
        self.node.is_some()
    }
    fn linearized(value: f64, inputs: &[(Self, f64)]) -> Self {
        match inputs.iter().find_map(|(v, _)| v.tape()) {
            Some(t) => t.custom(value, inputs),
            None => Self::constant(value),
        }
    }
    fn val(self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }
    fn sin(self) -> Self {
        self.unary(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.value.cos(), -self.value.sin())
    }
    fn acos(self) -> Self {
        let x = self.value;
        self.unary(x.acos(), -1.0 / (1.0 - x * x).sqrt())
    }
    fn atan2(self, x: Self) -> Self {
        let (yv, xv) = (self.value, x.value);
        let r2 = xv * xv + yv * yv;
        self.binary(x, yv.atan2(xv), xv / r2, -yv / r2)
    }
    fn powf(self, p: f64) -> Self {
        let x = self.value;
        let d = if p == 0.0 { 0.0 } else { p * x.powf(p - 1.0) };
        self.unary(x.powf(p), d)
    }
    fn abs(self) -> Self {
        let s = if self.value >= 0.0 { 1.0 } else { -1.0 };
        self.unary(self.value.abs(), s)
    }
    fn sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.value).exp());
        self.unary(s, s * (1.0 - s))
    }
}

/// Result of comparing AD gradients against central differences.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// max_i |ad_i - fd_i| / (|fd_i| + 1e-12)
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub ad: Vec<f64>,
    pub fd: Vec<f64>,
}

fn summarize(ad: Vec<f64>, fd: Vec<f64>) -> FdReport {
    let mut worst = (0.0, 0);
    for (i, (a, f)) in ad.iter().zip(&fd).enumerate() {
        let e = (a - f).abs() / (f.abs() + 1e-12);
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    FdReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        ad,
        fd,
    }
}

/// Check reverse-mode gradients of `f` at `x` against central differences
/// with step `eps` along every coordinate.
///
/// At a kink (e.g. `abs` at zero) the two sides legitimately disagree; the
/// report then shows a large error rather than an assertion failure.
pub fn finite_diff_check<F>(f: F, x: &[f64], eps: f64) -> Result<FdReport, AdError>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(x);
    let out = f(&vars);
    if !out.value.is_finite() {
        return Err(AdError::NonFinite(out.value));
    }
    let ad = match out.node {
        Some(_) => tape.backward(out)?.wrt_all(&vars),
        None => vec![0.0; x.len()],
    };
    let eval = |pt: &[f64]| -> Result<f64, AdError> {
        let consts: Vec<Var<'_>> = pt.iter().map(|&v| Var::constant(v)).collect();
        let v = f(&consts).value;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AdError::NonFinite(v))
        }
    };
    let all: Vec<usize> = (0..x.len()).collect();
    let fd = central_differences(eval, x, &all, eps)?;
    Ok(summarize(ad, fd))
}

/// Same check for gradients computed by an external pipeline: `value`
/// evaluates the function, `grad` holds its claimed gradient, and only the
/// listed coordinates are probed.
pub fn finite_diff_check_with<F>(
    value: F,
    grad: &[f64],
    x: &[f64],
    coords: &[usize],
    eps: f64,
) -> Result<FdReport, AdError>
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |pt: &[f64]| -> Result<f64, AdError> {
        let v = value(pt);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AdError::NonFinite(v))
        }
    };
    let fd = central_differences(eval, x, coords, eps)?;
    let ad = coords.iter().map(|&i| grad[i]).collect();
    Ok(summarize(ad, fd))
}

fn central_differences<F>(eval: F, x: &[f64], coords: &[usize], eps: f64) -> Result<Vec<f64>, AdError>
where
    F: Fn(&[f64]) -> Result<f64, AdError>,
{
    let mut pt = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            pt[i] = x[i] + eps;
            let hi = eval(&pt)?;
            pt[i] = x[i] - eps;
            let lo = eval(&pt)?;
            pt[i] = x[i];
            Ok((hi - lo) / (2.0 * eps))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Cx;
    use approx::assert_relative_eq;

    #[test]
    fn square_value_and_gradient() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.record(Primitive::Mul, &[x, x]).unwrap();
        assert_eq!(y.value(), 9.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(&x), 6.0);
    }

    #[test]
    fn product_gradient() {
        let tape = Tape::new();
        let (x, y) = (tape.var(2.0), tape.var(5.0));
        let z = x * y;
        assert_eq!(z.value(), 10.0);
        let g = tape.backward(z).unwrap();
        assert_eq!((g.wrt(&x), g.wrt(&y)), (5.0, 2.0));
    }

    #[test]
    fn complex_modulus_squared() {
        let tape = Tape::new();
        let (re, im) = (tape.var(3.0), tape.var(4.0));
        let m = tape.record(Primitive::Abs2, &[re, im]).unwrap();
        assert_eq!(m.value(), 25.0);
        let c = Cx::new(re, im);
        assert_eq!(c.norm_sqr().value(), 25.0);
    }

    #[test]
    fn log_modulus_of_complex_exponential() {
        // f(x) = ln |exp(x) (1 + j)|^2 = 2x + ln 2, so f'(x) = 2.
        let rep = finite_diff_check(
            |v| {
                let z = Cx::new(Var::constant(1.0), Var::constant(1.0)).scale(v[0].exp());
                z.norm_sqr().ln()
            },
            &[0.7],
            1e-6,
        )
        .unwrap();
        assert_relative_eq!(rep.ad[0], 2.0, epsilon = 1e-12);
        assert!(rep.max_rel_error < 1e-8, "{rep:?}");
    }

    #[test]
    fn quadratic_form_is_exact() {
        let a = [[2.0, 0.5, -1.0], [0.5, 3.0, 0.2], [-1.0, 0.2, 1.5]];
        let rep = finite_diff_check(
            |v| {
                let mut acc = Var::constant(0.0);
                for i in 0..3 {
                    for j in 0..3 {
                        acc = acc + v[i] * v[j] * a[i][j];
                    }
                }
                acc
            },
            &[0.3, -1.2, 2.5],
            1e-4,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
    }

    #[test]
    fn unused_nodes_and_constants_have_zero_gradient() {
        let tape = Tape::new();
        let (x, unused) = (tape.var(1.5), tape.var(7.0));
        let c = Var::constant(4.0);
        let y = x.sin() * c;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(&unused), 0.0);
        assert_eq!(g.wrt(&c), 0.0);
        assert_relative_eq!(g.wrt(&x), 4.0 * 1.5f64.cos());
    }

    #[test]
    fn constant_output_is_rejected() {
        let tape = Tape::new();
        let c = Var::constant(1.0);
        assert_eq!(tape.backward(c).unwrap_err(), AdError::NotOnTape);
        let other = Tape::new();
        let v = other.var(1.0);
        assert_eq!(tape.backward(v).unwrap_err(), AdError::NotOnTape);
    }

    #[test]
    fn domain_errors() {
        let tape = Tape::new();
        let z = tape.var(0.0);
        let neg = tape.var(-1.0);
        assert!(matches!(tape.record(Primitive::Ln, &[z]), Err(AdError::Domain { .. })));
        assert!(matches!(tape.record(Primitive::Sqrt, &[neg]), Err(AdError::Domain { .. })));
        let one = tape.var(1.0);
        assert_eq!(tape.record(Primitive::Div, &[one, z]).unwrap_err(), AdError::DivideByZero);
        assert!(matches!(tape.record(Primitive::Add, &[one]), Err(AdError::Arity { .. })));
    }

    #[test]
    fn dot_primitive() {
        let tape = Tape::new();
        let v = tape.vars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = tape.record(Primitive::Dot, &v).unwrap();
        assert_eq!(d.value(), 32.0);
        let g = tape.backward(d).unwrap();
        assert_eq!(g.wrt_all(&v), vec![4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn kink_is_reported_not_hidden() {
        let rep = finite_diff_check(|v| v[0].abs(), &[0.0], 1e-6).unwrap();
        // AD picks the right derivative (1), the central difference is 0.
        assert!(rep.max_rel_error > 1.0);
    }

    #[test]
    fn seeded_backward_is_a_vjp() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let a = x * x;
        let b = x.exp();
        let g = tape.backward_seeded(&[(a, 3.0), (b, -1.0)]);
        assert_relative_eq!(g.wrt(&x), 3.0 * 4.0 - 2f64.exp());
    }

    #[test]
    fn clear_resets() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            let _ = x * x;
        }
        assert_eq!(tape.len(), 2);
        tape.clear();
        assert!(tape.is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn backward_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, x0 in 0.1..2.0f64, y0 in -2.0..2.0f64) {
                let tape = Tape::new();
                let (x, y) = (tape.var(x0), tape.var(y0));
                let f = x.ln() * y;
                let g = (x * y).sin();
                let h = f * a + g * b;
                let gf = tape.backward(f).unwrap();
                let gg = tape.backward(g).unwrap();
                let gh = tape.backward(h).unwrap();
                for v in [x, y] {
                    let want = a * gf.wrt(&v) + b * gg.wrt(&v);
                    prop_assert!((gh.wrt(&v) - want).abs() <= 1e-12 * (1.0 + want.abs()));
                }
            }

            #[test]
            fn elementary_ops_match_central_differences(x0 in 0.2..2.0f64, y0 in 0.2..2.0f64) {
                let rep = finite_diff_check(
                    |v| {
                        let (x, y) = (v[0], v[1]);
                        (x / y).sqrt() + x.cos() * y.exp() - y.powf(1.7) + (x * 0.3).atan2(y) + x.sigmoid()
                    },
                    &[x0, y0],
                    1e-6,
                )
                .unwrap();
                // Relative error is meaningless where a partial crosses zero.
                for (a, f) in rep.ad.iter().zip(&rep.fd) {
                    prop_assert!((a - f).abs() <= 1e-6 * (1.0 + f.abs()), "{:?}", rep);
                }
            }
        }
    }
}
