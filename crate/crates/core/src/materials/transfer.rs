//! 2x2 polarization transfer at one surface interaction.
//!
//! Fields travel in the global spherical basis `(theta-hat, phi-hat)` of
//! their propagation direction. At a hit the incoming field is rotated into
//! the local (s, p) basis of the plane of incidence, scaled by the Fresnel
//! coefficients, the lobe amplitude and the cross-polar mixing, and rotated
//! back into the global basis of the outgoing direction.

use std::f64::consts::PI;

use super::scatter::{scattering_pattern_cos, NormTable};
use super::{complex_permittivity, fresnel_coeffs_cos, MaterialParams};
use crate::math::{sph_basis, Cx, Mat2, Real, Vec3};

/// Mirror `k` about the plane with unit normal `n`.
pub fn reflect<R: Real>(k: Vec3<R>, n: Vec3<R>) -> Vec3<R> {
    k - n * (k.dot(n) * 2.0)
}

#[derive(Clone, Copy, Debug)]
pub struct TransferInputs<R> {
    /// Propagation direction of the incident wave (toward the surface).
    pub k_in: Vec3<R>,
    /// Propagation direction of the scattered wave (away from the surface).
    pub k_out: Vec3<R>,
    /// Surface normal, either orientation.
    pub normal: Vec3<R>,
}

fn unit_or<R: Real>(v: Vec3<R>, fallback: impl FnOnce() -> Vec3<R>) -> Vec3<R> {
    if v.norm_sqr().val() > 1e-20 {
        v.normalized()
    } else {
        fallback()
    }
}

fn project<R: Real>(rows: [Vec3<R>; 2], cols: [Vec3<R>; 2]) -> Mat2<R> {
    Mat2::from_real([
        [rows[0].dot(cols[0]), rows[0].dot(cols[1])],
        [rows[1].dot(cols[0]), rows[1].dot(cols[1])],
    ])
}

/// Scattering matrix in the local (s, p) bases, or `None` when the outgoing
/// direction is below the surface. Also returns the incidence cosine.
pub fn local_matrix<R: Real>(
    inp: &TransferInputs<R>,
    mat: &MaterialParams<R>,
    table: &NormTable,
    freq: f64,
) -> Option<(Mat2<R>, R)> {
    let n = if inp.normal.dot(inp.k_in).val() > 0.0 {
        -inp.normal
    } else {
        inp.normal
    };
    let cos_i = -inp.k_in.dot(n);
    let cos_o = inp.k_out.dot(n);
    if cos_o.val() <= 0.0 || cos_i.val() <= 0.0 {
        return None;
    }
    let spec = reflect(inp.k_in, n);
    let cos_psi = inp.k_out.dot(spec);

    let eta = complex_permittivity(mat.eps_r, mat.sigma, freq);
    let (r_te, r_tm) = fresnel_coeffs_cos(eta, cos_i);

    let f_dir = scattering_pattern_cos(table, cos_i, cos_psi);
    let s2 = mat.s.sqr();
    let power = s2.rsub(1.0) * f_dir + s2 * cos_o * (1.0 / PI);
    if power.val() <= 0.0 {
        return None;
    }
    let amp = power.sqrt();

    let sq = |x: R| if x.val() == 0.0 { R::zero() } else { x.sqrt() };
    let (co, cross) = (sq(mat.xpd.rsub(1.0)), sq(mat.xpd));
    let m = Mat2::new(
        r_te * Cx::real(co),
        r_te * Cx::real(cross),
        r_tm * Cx::real(cross),
        r_tm * Cx::real(co),
    );
    Some((m.scale(amp), cos_i))
}

/// Global-to-global transfer matrix; zero below the horizon.
pub fn transfer_matrix<R: Real>(
    inp: &TransferInputs<R>,
    mat: &MaterialParams<R>,
    table: &NormTable,
    freq: f64,
) -> Mat2<R> {
    let Some((m, _)) = local_matrix(inp, mat, table, freq) else {
        return Mat2::zero();
    };
    let n = inp.normal;
    let perp = || n.value().any_perpendicular().lift::<R>();
    let s_in = unit_or(inp.k_in.cross(n), || unit_or(inp.k_out.cross(n), perp));
    let s_out = unit_or(inp.k_out.cross(n), || s_in);
    let p_in = s_in.cross(inp.k_in);
    let p_out = s_out.cross(inp.k_out);

    let (t_in, f_in) = sph_basis(inp.k_in);
    let (t_out, f_out) = sph_basis(inp.k_out);
    let b_in = project([s_in, p_in], [t_in, f_in]);
    // Rows are the global axes, columns the local ones.
    let b_out = project([t_out, f_out], [s_out, p_out]);
    b_out.mul_mat(&m).mul_mat(&b_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, Var};
    use crate::materials::{scattering_pattern, RadioMaterial};
    use crate::math::{gauss_legendre_on, sph_dir, C64};
    use approx::assert_relative_eq;

    const FREQ: f64 = 28e9;

    fn pec() -> MaterialParams<f64> {
        RadioMaterial {
            eps_r: 1.0,
            sigma: 1e12,
            s: 0.0,
            xpd: 0.0,
            alpha_r: 0.0,
        }
        .params()
    }

    fn incident(theta: f64, phi: f64) -> Vec3 {
        // Propagating down toward the z = 0 plane.
        -sph_dir(theta, phi)
    }

    #[test]
    fn specular_peak_magnitudes() {
        let alpha = 300.0;
        let table = NormTable::get(alpha).unwrap();
        let mat = RadioMaterial {
            eps_r: 4.0,
            sigma: 0.0,
            s: 0.0,
            xpd: 0.0,
            alpha_r: alpha,
        }
        .params();
        let ti = 0.6;
        let k_in = incident(ti, 0.3 + PI);
        let k_out = reflect(k_in, Vec3::Z);
        let inp = TransferInputs { k_in, k_out, normal: Vec3::Z };
        let (m, _) = local_matrix(&inp, &mat, &table, FREQ).unwrap();
        let (te, tm) = crate::materials::fresnel_coeffs(C64::new(4.0, 0.0), ti);
        let peak = scattering_pattern(alpha, ti, 0.0).unwrap().sqrt();
        assert_relative_eq!(m.m[0][0].abs(), te.abs() * peak, max_relative = 1e-12);
        assert_relative_eq!(m.m[1][1].abs(), tm.abs() * peak, max_relative = 1e-12);
        assert_eq!(m.m[0][1], C64::ZERO);
        assert_eq!(m.m[1][0], C64::ZERO);
    }

    #[test]
    fn below_horizon_is_zero() {
        let table = NormTable::get(10.0).unwrap();
        let inp = TransferInputs {
            k_in: incident(0.5, 0.0),
            k_out: sph_dir(2.0, 0.0),
            normal: Vec3::Z,
        };
        assert_eq!(transfer_matrix(&inp, &pec(), &table, FREQ), Mat2::zero());
    }

    #[test]
    fn pec_is_norm_preserving_up_to_lobe_amplitude() {
        let table = NormTable::get(50.0).unwrap();
        for (ti, to, po) in [(0.3, 0.35, 0.1), (1.2, 1.0, -0.4), (0.0, 0.2, 1.0), (0.7, 0.0, 0.0)] {
            let k_in = incident(ti, PI + 0.2);
            let k_out = sph_dir(to, po);
            let inp = TransferInputs { k_in, k_out, normal: Vec3::Z };
            let t = transfer_matrix(&inp, &pec(), &table, FREQ);
            let cpsi = k_out.dot(reflect(k_in, Vec3::Z));
            let lobe = scattering_pattern_cos(&table, ti.cos(), cpsi).sqrt();
            assert!(t.operator_norm() / lobe <= 1.0 + 1e-9);
            // sigma = 1e12 leaves |r| within a few 1e-6 of one.
            assert_relative_eq!(t.operator_norm() / lobe, 1.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn pec_specular_mirrors_polarization() {
        // Normal incidence on a PEC flips the transverse field.
        let table = NormTable::get(100.0).unwrap();
        let k_in = -Vec3::Z;
        let inp = TransferInputs {
            k_in,
            k_out: Vec3::Z,
            normal: Vec3::Z,
        };
        let t = transfer_matrix(&inp, &pec(), &table, FREQ);
        let (th_in, ph_in) = sph_basis(k_in);
        let (th_out, ph_out) = sph_basis(Vec3::Z);
        for e in [[C64::ONE, C64::ZERO], [C64::ZERO, C64::ONE]] {
            let out = t.mul_vec(e);
            let field_in = th_in.scale(e[0].re) + ph_in.scale(e[1].re);
            let field_out = th_out.scale(out[0].re) + ph_out.scale(out[1].re);
            let lobe = scattering_pattern(100.0, 0.0, 0.0).unwrap().sqrt();
            assert_relative_eq!((field_out + field_in.scale(lobe)).norm() / lobe, 0.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn pec_energy_over_hemisphere() {
        for alpha in [10.0, 100.0] {
            let table = NormTable::get(alpha).unwrap();
            for ti in [0.2, 1.0] {
                let k_in = incident(ti, PI);
                let mut acc = 0.0;
                let edges = [0.0, (ti - 0.6).max(0.0), (ti + 0.6).min(PI / 2.0), PI / 2.0];
                for w in edges.windows(2) {
                    if w[1] <= w[0] {
                        continue;
                    }
                    for (th, wt) in gauss_legendre_on(96, w[0], w[1]) {
                        for (ph, wp) in gauss_legendre_on(192, -PI, PI) {
                            let inp = TransferInputs {
                                k_in,
                                k_out: sph_dir(th, ph),
                                normal: Vec3::Z,
                            };
                            let (m, _) = local_matrix(&inp, &pec(), &table, FREQ).unwrap();
                            acc += wt * wp * th.sin() * m.frobenius_sqr() / 2.0;
                        }
                    }
                }
                assert_relative_eq!(acc, 1.0, epsilon = 1e-2);
            }
        }
    }

    #[test]
    fn diffuse_branch_and_xpd_columns() {
        let table = NormTable::get(100.0).unwrap();
        let mat = RadioMaterial {
            eps_r: 1.0,
            sigma: 1e12,
            s: 1.0,
            xpd: 0.3,
            alpha_r: 100.0,
        }
        .params();
        let k_out = sph_dir(1.1, 2.0);
        let inp = TransferInputs {
            k_in: incident(0.4, PI),
            k_out,
            normal: Vec3::Z,
        };
        let (m, _) = local_matrix(&inp, &mat, &table, FREQ).unwrap();
        // Each input polarization keeps its power: |r|^2 * cos_o / pi.
        for col in 0..2 {
            let p = m.m[0][col].norm_sqr() + m.m[1][col].norm_sqr();
            assert_relative_eq!(p, k_out.z / PI, max_relative = 1e-5);
        }
    }

    #[test]
    fn gradients_through_material_and_geometry() {
        let table = NormTable::get(80.0).unwrap();
        let rep = finite_diff_check(
            |v: &[Var<'_>]| {
                let mat = MaterialParams {
                    eps_r: v[0],
                    sigma: v[1],
                    s: v[2],
                    xpd: v[3],
                };
                let n = Vec3::new(v[4], v[5], Var::constant(1.0)).normalized();
                let k_in = incident(0.7, PI).lift::<Var<'_>>();
                let k_out = sph_dir(0.72, 0.05).lift::<Var<'_>>();
                let t = transfer_matrix(&TransferInputs { k_in, k_out, normal: n }, &mat, &table, FREQ);
                let e = t.mul_vec([Cx::one(), Cx::new(Var::constant(0.3), Var::constant(0.1))]);
                e[0].norm_sqr() + e[1].norm_sqr() * 0.5 + e[0].re
            },
            &[4.0, 0.05, 0.3, 0.1, 0.02, -0.01],
            1e-6,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }
}
