//! Radio materials: Fresnel reflection, the directional scattering lobe,
//! polarization transfer matrices and the neural material field.

mod field;
mod scatter;
mod transfer;

pub use field::{
    positional_encoding, transform_raw, MaterialField, MlpCache, FIELD_HIDDEN, FIELD_LAYERS, FIELD_OCTAVES, XPD_INIT,
};
pub use scatter::{
    cosine_hemisphere_pdf, hpbw_deg, lobe_pdf, normalization_factor, normalization_factor_cos, sample_cosine_hemisphere,
    sample_lobe, sample_scatter_direction, scattering_pattern, scattering_pattern_cos, HpbwConvention, LobeSample,
    NormTable,
};
pub use transfer::{reflect, transfer_matrix, TransferInputs};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Cx, Real};

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.8541878128e-12;

pub const EPS_R_RANGE: (f64, f64) = (1.0, 200.0);
pub const SIGMA_RANGE: (f64, f64) = (1e-3, 1e6);

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("normalization quadrature did not converge for alpha={alpha}, cos_i={cos_i}: rel. change {change:e}")]
    NonConvergence { alpha: f64, cos_i: f64, change: f64 },
    #[error("invalid material: {0}")]
    Invalid(String),
    #[error("non-finite weights in material field")]
    NonFiniteWeights,
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

/// Electromagnetic surface parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioMaterial {
    pub eps_r: f64,
    /// S/m
    pub sigma: f64,
    /// Amplitude fraction routed to diffuse scattering.
    pub s: f64,
    pub xpd: f64,
    pub alpha_r: f64,
}

impl RadioMaterial {
    /// Checks the stored ranges; `sigma = 0` is allowed for lossless
    /// dielectrics in hand-written tables.
    pub fn validate(&self) -> Result<(), MaterialError> {
        let ok = (EPS_R_RANGE.0..=EPS_R_RANGE.1).contains(&self.eps_r)
            && (0.0..=SIGMA_RANGE.1 * 1e3).contains(&self.sigma)
            && (0.0..=1.0).contains(&self.s)
            && (0.0..=1.0).contains(&self.xpd)
            && self.alpha_r >= 0.0
            && self.alpha_r.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MaterialError::Invalid(format!("{self:?}")))
        }
    }

    pub fn params<R: Real>(&self) -> MaterialParams<R> {
        MaterialParams {
            eps_r: R::cst(self.eps_r),
            sigma: R::cst(self.sigma),
            s: R::cst(self.s),
            xpd: R::cst(self.xpd),
        }
    }

    /// Near-perfect conductor with a purely directional lobe.
    pub fn conductor(alpha_r: f64) -> Self {
        Self {
            eps_r: 1.0,
            sigma: 1e6,
            s: 0.0,
            xpd: 0.0,
            alpha_r,
        }
    }
}

/// Material parameters that may carry derivatives; the lobe exponent is
/// always a plain number.
#[derive(Clone, Copy, Debug)]
pub struct MaterialParams<R> {
    pub eps_r: R,
    pub sigma: R,
    pub s: R,
    pub xpd: R,
}

impl<R: Real> MaterialParams<R> {
    pub fn value(&self, alpha_r: f64) -> RadioMaterial {
        RadioMaterial {
            eps_r: self.eps_r.val(),
            sigma: self.sigma.val(),
            s: self.s.val(),
            xpd: self.xpd.val(),
            alpha_r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMaterial {
    pub name: String,
    #[serde(flatten)]
    pub material: RadioMaterial,
}

/// Read a JSON array of named materials.
pub fn load_material_table(path: &Path) -> Result<Vec<NamedMaterial>, MaterialError> {
    let err = |msg: String| MaterialError::File {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let table: Vec<NamedMaterial> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    for m in &table {
        m.material.validate()?;
    }
    Ok(table)
}

/// `eps_r - j sigma / (2 pi f eps0)`
pub fn complex_permittivity<R: Real>(eps_r: R, sigma: R, freq: f64) -> Cx<R> {
    Cx::new(eps_r, -(sigma * (1.0 / (2.0 * std::f64::consts::PI * freq * EPS0))))
}

/// `(r_TE, r_TM)` for incidence from air onto a half-space with relative
/// complex permittivity `eta`, given the cosine of the incidence angle.
pub fn fresnel_coeffs_cos<R: Real>(eta: Cx<R>, cos_i: R) -> (Cx<R>, Cx<R>) {
    let sin2 = cos_i.sqr().rsub(1.0);
    let root = (eta - Cx::real(sin2)).sqrt();
    let c = Cx::real(cos_i);
    let r_te = (c - root) / (c + root);
    let ec = eta * c;
    let r_tm = (ec - root) / (ec + root);
    (r_te, r_tm)
}

pub fn fresnel_coeffs(eta: Cx<f64>, theta_i: f64) -> (Cx<f64>, Cx<f64>) {
    fresnel_coeffs_cos(eta, theta_i.cos())
}
