//! Loss gradients through the traced paths.
//!
//! Sampled paths are frozen: hit points are attached to the surface they lie
//! on and Monte Carlo weights are constants. The spectrum loss depends on
//! each path only through its weighted power and its arrival direction, so
//! the loss adjoint is first pushed back to those two quantities and then,
//! path by path, through the field evaluation on a small tape.

use rayon::prelude::*;

use super::{log_mae_offset, CalibError, Target};
use crate::autodiff::{Tape, Var};
use crate::geometry::TriangleMesh;
use crate::materials::{transform_raw, MaterialField, MaterialParams};
use crate::math::{Mat3, Real, Vec3, C64};
use crate::tracer::{eval_path, MaterialSource, PathEval, PathSample, PathVertex, Resolved, SceneConfig, VertexState};

/// Paths per gradient work unit; partial sums are combined in unit order.
const GRAD_CHUNK: usize = 64;

/// Rigid motion of one mesh object about `center`: translation
/// `(tx, ty, tz)` in metres followed by Euler angles `(rx, ry, rz)` in
/// radians, applied as `Rz * Ry * Rx`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidOffset {
    pub object: u32,
    pub center: Vec3,
    pub params: [f64; 6],
}

impl RigidOffset {
    pub fn new(object: u32, center: Vec3) -> Self {
        Self {
            object,
            center,
            params: [0.0; 6],
        }
    }

    pub fn rotation<R: Real>(p: &[R]) -> Mat3<R> {
        Mat3::from_euler_xyz(p[3], p[4], p[5])
    }

    /// Move the object's vertices from their rest positions.
    pub fn apply(&self, rest: &TriangleMesh) -> TriangleMesh {
        let rot = Self::rotation(&self.params);
        let t = Vec3::new(self.params[0], self.params[1], self.params[2]);
        let mut out = rest.clone();
        let mut moved = vec![false; rest.vertices.len()];
        for (f, face) in rest.faces.iter().enumerate() {
            if rest.object_id[f] != self.object {
                continue;
            }
            for &i in face {
                let i = i as usize;
                if !moved[i] {
                    moved[i] = true;
                    out.vertices[i] = rot.mul_vec(rest.vertices[i] - self.center) + self.center + t;
                }
            }
            out.face_normals[f] = rot.mul_vec(rest.face_normals[f]).normalized();
        }
        out
    }

    /// Surface-attached point and normal as functions of `p`, anchored at
    /// the vertex recorded under the current parameters.
    fn map_vertex<R: Real>(&self, p: &[R], v: &PathVertex) -> (Vec3<R>, Vec3<R>) {
        let cur = Self::rotation(&self.params).transpose();
        let t0 = Vec3::new(self.params[0], self.params[1], self.params[2]);
        let q = cur.mul_vec(v.point - self.center - t0).lift::<R>();
        let n0 = cur.mul_vec(v.normal).lift::<R>();
        let rot = Self::rotation(p);
        let t = Vec3::new(p[0], p[1], p[2]);
        (rot.mul_vec(q) + self.center.lift() + t, rot.mul_vec(n0))
    }
}

/// What the gradient is taken with respect to.
#[derive(Clone, Copy, Debug)]
pub enum ParamMode<'a> {
    /// Weights of the scene's material field.
    Material,
    /// The six rigid parameters of one object.
    Geometry(&'a RigidOffset),
}

#[derive(Clone, Debug)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub n_paths: usize,
}

fn lift_params<R: Real>(m: MaterialParams<f64>) -> MaterialParams<R> {
    MaterialParams {
        eps_r: R::cst(m.eps_r),
        sigma: R::cst(m.sigma),
        s: R::cst(m.s),
        xpd: R::cst(m.xpd),
    }
}

fn path_terms<R: Real>(
    cfg: &SceneConfig,
    res: &Resolved,
    path: &PathSample,
    geo: Option<(&RigidOffset, &[R])>,
    raw: Option<&[[R; 4]]>,
) -> PathEval<R> {
    let states: Vec<VertexState<'_, R>> = path
        .vertices
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let (point, normal) = match geo {
                Some((rig, p)) if v.object_id == rig.object => rig.map_vertex(p, v),
                _ => (v.point.lift(), v.normal.lift()),
            };
            let material = match raw {
                Some(r) => transform_raw(r[j]),
                None => lift_params(res.material(cfg, v).0),
            };
            VertexState {
                point,
                normal,
                material,
                table: res.table(cfg, v),
            }
        })
        .collect();
    eval_path(cfg, &states)
}

fn field_of(cfg: &SceneConfig) -> Result<&MaterialField, CalibError> {
    match &cfg.materials {
        MaterialSource::Field { field, .. } => Ok(field),
        MaterialSource::Table(_) => Err(CalibError::Dataset("material gradients need a material field".into())),
    }
}

/// Element positions in world axes (relative to the array centre).
fn world_offsets(cfg: &SceneConfig) -> Vec<Vec3> {
    cfg.rx.array.offsets.iter().map(|d| cfg.rx.pose.to_world(*d)).collect()
}

/// Loss from per-path `(mc weight, power, direction toward source)` and the
/// adjoint `dL/dRe P_m + j dL/dIm P_m` of each element sum.
fn loss_from_terms(cfg: &SceneConfig, terms: &[(f64, f64, Vec3)], target: &Target) -> Result<(f64, Vec<C64>), CalibError> {
    let arr = &cfg.rx.array;
    let kw = arr.wavenumber();
    let dw = world_offsets(cfg);
    let mut p = vec![C64::ZERO; arr.len()];
    for &(w, pw, om) in terms {
        for (pm, d) in p.iter_mut().zip(&dw) {
            *pm += C64::cis(kw * d.dot(om)).scale(w * pw);
        }
    }
    let norm = 1.0 / (arr.len() as f64).sqrt();
    let n_az = target.grid.az_deg.len();
    let kernels: Vec<Vec<C64>> = target
        .cells
        .par_iter()
        .map(|&c| {
            let u = target.grid.direction(c / n_az, c % n_az);
            arr.offsets.iter().map(|d| C64::cis(-kw * d.dot(u)).scale(norm)).collect()
        })
        .collect();
    let z: Vec<C64> = kernels
        .iter()
        .map(|a| a.iter().zip(&p).fold(C64::ZERO, |acc, (ai, pi)| acc + *ai * *pi))
        .collect();
    let tape = Tape::new();
    let s = tape.vars(&z.iter().map(|c| c.abs()).collect::<Vec<_>>());
    let loss = log_mae_offset(&s, &target.values, target.offset)?;
    let ds = match loss.tape() {
        Some(_) => tape.backward(loss).expect("loss on tape").wrt_all(&s),
        None => vec![0.0; s.len()],
    };
    let mut g = vec![C64::ZERO; arr.len()];
    for ((zc, a), gs) in z.iter().zip(&kernels).zip(&ds) {
        let mag = zc.abs();
        if *gs == 0.0 || mag == 0.0 {
            continue;
        }
        let f = gs / mag;
        for (gm, am) in g.iter_mut().zip(a) {
            *gm += (*zc * am.conj()).scale(f);
        }
    }
    Ok((loss.value(), g))
}

fn f64_terms(
    cfg: &SceneConfig,
    res: &Resolved,
    paths: &[PathSample],
    mode: ParamMode<'_>,
    field: Option<&MaterialField>,
    params: Option<&[f64]>,
) -> Vec<(f64, f64, Vec3)> {
    paths
        .par_iter()
        .map(|path| {
            let raw: Option<Vec<[f64; 4]>> =
                field.map(|f| path.vertices.iter().map(|v| f.forward_raw(v.point)).collect());
            let ev = match mode {
                ParamMode::Geometry(rig) => {
                    let p = params.unwrap_or(&rig.params);
                    path_terms(cfg, res, path, Some((rig, p)), raw.as_deref())
                }
                ParamMode::Material => path_terms::<f64>(cfg, res, path, None, raw.as_deref()),
            };
            (path.mc_weight, ev.power, ev.toward_source)
        })
        .collect()
}

/// Loss of frozen paths with the parameters replaced by `params` (field
/// weights or the six rigid parameters).
pub fn frozen_loss(
    cfg: &SceneConfig,
    paths: &[PathSample],
    target: &Target,
    mode: ParamMode<'_>,
    params: &[f64],
) -> Result<f64, CalibError> {
    let res = Resolved::new(cfg)?;
    let terms = match mode {
        ParamMode::Material => {
            let mut f = field_of(cfg)?.clone();
            f.set_params(params).map_err(|e| CalibError::Dataset(e.to_string()))?;
            f64_terms(cfg, &res, paths, mode, Some(&f), None)
        }
        ParamMode::Geometry(_) => {
            let field = field_of(cfg).ok();
            f64_terms(cfg, &res, paths, mode, field, Some(params))
        }
    };
    Ok(loss_from_terms(cfg, &terms, target)?.0)
}

pub fn loss_and_gradient(
    cfg: &SceneConfig,
    paths: &[PathSample],
    target: &Target,
    mode: ParamMode<'_>,
) -> Result<LossGradient, CalibError> {
    let res = Resolved::new(cfg)?;
    let field = field_of(cfg).ok();
    if matches!(mode, ParamMode::Material) && field.is_none() {
        field_of(cfg)?;
    }
    let terms = f64_terms(cfg, &res, paths, mode, field, None);
    let (loss, g) = loss_from_terms(cfg, &terms, target)?;

    let kw = cfg.rx.array.wavenumber();
    let dw = world_offsets(cfg);
    let dim = match mode {
        ParamMode::Material => field.map_or(0, |f| f.n_params()),
        ParamMode::Geometry(_) => 6,
    };
    let partials: Vec<Vec<f64>> = paths
        .par_chunks(GRAD_CHUNK)
        .zip(terms.par_chunks(GRAD_CHUNK))
        .map(|(chunk, tchunk)| {
            let mut acc = vec![0.0; dim];
            let mut tape = Tape::new();
            for (path, &(w, pw, om)) in chunk.iter().zip(tchunk) {
                // Adjoints of the path power and arrival direction.
                let mut s_p = 0.0;
                let mut s_om = Vec3::ZERO;
                for (gm, d) in g.iter().zip(&dw) {
                    let e = gm.conj() * C64::cis(kw * d.dot(om));
                    s_p += e.re;
                    s_om += d.scale(-e.im * kw);
                }
                s_p *= w;
                s_om = s_om.scale(w * pw);
                if s_p == 0.0 && s_om == Vec3::ZERO {
                    continue;
                }
                backprop_path(cfg, &res, path, mode, field, &tape, s_p, s_om, &mut acc);
                tape.clear();
            }
            acc
        })
        .collect();
    let mut grad = vec![0.0; dim];
    for part in partials {
        for (a, b) in grad.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(LossGradient {
        loss,
        grad,
        n_paths: paths.len(),
    })
}

fn seeds<'t>(ev: &PathEval<Var<'t>>, s_p: f64, s_om: Vec3) -> Vec<(Var<'t>, f64)> {
    vec![
        (ev.power, s_p),
        (ev.toward_source.x, s_om.x),
        (ev.toward_source.y, s_om.y),
        (ev.toward_source.z, s_om.z),
    ]
}

#[allow(clippy::too_many_arguments)]
fn backprop_path(
    cfg: &SceneConfig,
    res: &Resolved,
    path: &PathSample,
    mode: ParamMode<'_>,
    field: Option<&MaterialField>,
    tape: &Tape,
    s_p: f64,
    s_om: Vec3,
    acc: &mut [f64],
) {
    match mode {
        ParamMode::Material => {
            let field = field.expect("checked by caller");
            let cached: Vec<([f64; 4], _)> = path.vertices.iter().map(|v| field.forward_cached(v.point)).collect();
            let leaves: Vec<[Var<'_>; 4]> = cached
                .iter()
                .map(|(raw, _)| [tape.var(raw[0]), tape.var(raw[1]), tape.var(raw[2]), tape.var(raw[3])])
                .collect();
            let ev = path_terms(cfg, res, path, None, Some(&leaves));
            let gr = tape.backward_seeded(&seeds(&ev, s_p, s_om));
            for (lv, (_, cache)) in leaves.iter().zip(&cached) {
                let d = [gr.wrt(&lv[0]), gr.wrt(&lv[1]), gr.wrt(&lv[2]), gr.wrt(&lv[3])];
                field.vjp(cache, d, acc);
            }
        }
        ParamMode::Geometry(rig) => {
            let leaves = tape.vars(&rig.params);
            let raw: Option<Vec<[Var<'_>; 4]>> = field.map(|f| {
                path.vertices
                    .iter()
                    .map(|v| f.forward_raw(v.point).map(Var::constant))
                    .collect()
            });
            let ev = path_terms(cfg, res, path, Some((rig, &leaves)), raw.as_deref());
            let gr = tape.backward_seeded(&seeds(&ev, s_p, s_om));
            for (a, l) in acc.iter_mut().zip(&leaves) {
                *a += gr.wrt(l);
            }
        }
    }
}
