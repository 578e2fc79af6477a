//! Per-path field evaluation, generic over the scalar type so the same code
//! serves forward tracing and gradient passes.

use std::f64::consts::PI;

use super::SceneConfig;
use crate::antenna::{pattern_world, tx_array_weight};
use crate::materials::{transfer_matrix, MaterialParams, NormTable, TransferInputs};
use crate::math::{sph_basis, Cx, Mat2, Real, Vec3, C64};

#[derive(Clone, Copy, Debug)]
pub struct VertexState<'a, R> {
    pub point: Vec3<R>,
    pub normal: Vec3<R>,
    pub material: MaterialParams<R>,
    pub table: &'a NormTable,
}

#[derive(Clone, Copy, Debug)]
pub struct PathEval<R> {
    pub transfer: Mat2<R>,
    /// `P_t |a|^2`, without the Monte Carlo weight.
    pub power: R,
    /// Unit vector from the receiver toward the last interaction (or the
    /// transmitter), world frame.
    pub toward_source: Vec3<R>,
}

fn field_3d<R: Real>(k: Vec3<R>, e: [Cx<R>; 2]) -> [Cx<R>; 3] {
    let (t, p) = sph_basis(k);
    [
        e[0].scale(t.x) + e[1].scale(p.x),
        e[0].scale(t.y) + e[1].scale(p.y),
        e[0].scale(t.z) + e[1].scale(p.z),
    ]
}

/// Transmit excitation along `k_aod` in its global basis.
fn excitation(cfg: &SceneConfig, k_aod: Vec3) -> [C64; 2] {
    let c = pattern_world(&cfg.tx.pattern, &cfg.tx.pose, k_aod);
    let w = tx_array_weight(&cfg.tx.array, &cfg.tx.precoding, cfg.tx.pose.to_local(k_aod))
        .expect("precoding length checked by validate");
    [c[0] * w, c[1] * w]
}

/// Conjugated receive pattern toward `-k_aoa` as a world-frame vector.
fn receive_vector(cfg: &SceneConfig, k_aoa: Vec3) -> [C64; 3] {
    let c = pattern_world(&cfg.rx.pattern, &cfg.rx.pose, -k_aoa);
    field_3d(-k_aoa, c).map(|x| x.conj())
}

const DIR_STEP: f64 = 1e-6;

/// `f` at the unit direction `k`. When `k` is tracked the result carries
/// the directional derivatives of `f`, taken by central differences.
fn dir_function<R: Real, const N: usize>(k: Vec3<R>, f: impl Fn(Vec3) -> [C64; N]) -> [Cx<R>; N] {
    let kv = k.value();
    let v = f(kv);
    if !(k.x.is_tracked() || k.y.is_tracked() || k.z.is_tracked()) {
        return v.map(|c| c.lift::<R>());
    }
    let axes = [Vec3::X, Vec3::Y, Vec3::Z];
    let jac: Vec<[C64; N]> = axes
        .iter()
        .map(|a| {
            let hi = f((kv + a.scale(DIR_STEP)).normalized());
            let lo = f((kv - a.scale(DIR_STEP)).normalized());
            std::array::from_fn(|i| (hi[i] - lo[i]).scale(0.5 / DIR_STEP))
        })
        .collect();
    let comps = [k.x, k.y, k.z];
    std::array::from_fn(|i| {
        let re: Vec<(R, f64)> = (0..3).map(|a| (comps[a], jac[a][i].re)).collect();
        let im: Vec<(R, f64)> = (0..3).map(|a| (comps[a], jac[a][i].im)).collect();
        Cx::new(R::linearized(v[i].re, &re), R::linearized(v[i].im, &im))
    })
}

fn receive<R: Real>(cfg: &SceneConfig, k_aoa: Vec3<R>, e: [Cx<R>; 2]) -> Cx<R> {
    let cr = dir_function(k_aoa, |k| receive_vector(cfg, k));
    let ef = field_3d(k_aoa, e);
    cr[0] * ef[0] + cr[1] * ef[1] + cr[2] * ef[2]
}

pub(crate) fn received_amplitude(cfg: &SceneConfig, t: &Mat2, k_aod: Vec3, k_aoa: Vec3) -> C64 {
    let e = t.mul_vec(excitation(cfg, k_aod));
    receive(cfg, k_aoa, e)
}

/// Field transfer and received power along TX -> vertices -> RX.
pub fn eval_path<R: Real>(cfg: &SceneConfig, verts: &[VertexState<'_, R>]) -> PathEval<R> {
    let tx = cfg.tx.pose.position.lift::<R>();
    let rx = cfg.rx.pose.position.lift::<R>();
    let mut pts = Vec::with_capacity(verts.len() + 2);
    pts.push(tx);
    pts.extend(verts.iter().map(|v| v.point));
    pts.push(rx);

    let seg: Vec<(Vec3<R>, R)> = pts
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let r = d.norm();
            (d * r.recip(), r)
        })
        .collect();

    let aperture = cfg.wavelength() / (4.0 * PI);
    let mut t = Mat2::identity().scale(seg[0].1.recip() * aperture);
    for (j, v) in verts.iter().enumerate() {
        let (k_in, k_out) = (seg[j].0, seg[j + 1].0);
        let inp = TransferInputs {
            k_in,
            k_out,
            normal: v.normal,
        };
        let m = transfer_matrix(&inp, &v.material, v.table, cfg.freq);
        let cos_i = k_in.dot(v.normal).abs();
        t = m.scale(cos_i.sqrt() * seg[j + 1].1.recip()).mul_mat(&t);
    }

    let k_aod = seg[0].0;
    let k_aoa = seg[seg.len() - 1].0;
    let e0 = dir_function(k_aod, |k| excitation(cfg, k));
    let a = receive(cfg, k_aoa, t.mul_vec(e0));
    PathEval {
        transfer: t,
        power: a.norm_sqr() * cfg.tx_power,
        toward_source: -k_aoa,
    }
}
