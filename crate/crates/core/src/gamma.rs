//! Closed forms around γ, the per-pixel ratio of height above the road plane
//! to depth.
//!
//! With an upward plane normal `n`, camera height `h_c` and viewing ray
//! `r = K⁻¹ p`, a point `d·r` has height `n·(d·r) + h_c`, so
//!
//! ```text
//! γ = h / d = n·r + h_c / d      ⇔      d = h_c / (γ − n·r)
//! ```
//!
//! The denominator `γ − n·r = γ + n_down·r` is positive for every pixel whose
//! ray reaches the plane below the horizon.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pixel};
use crate::error::{Error, Result};
use crate::field::{FieldRole, ScalarField};
use crate::geometry::{PlaneModel, RelativePose};

/// Pixels whose depth denominator falls at or below this value are invalid.
pub const DENOM_EPS: f64 = 1e-6;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")))
    }
}

/// Signed log transform `sign(γ)·ln(1 + α|γ|)`.
pub fn gamma_to_logspace(gamma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((alpha * gamma.abs()).ln_1p().copysign(gamma))
}

/// Inverse of [`gamma_to_logspace`]: `sign(γ̃)·(exp|γ̃| − 1)/α`.
pub fn logspace_to_gamma(gtilde: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((gtilde.abs().exp_m1() / alpha).copysign(gtilde))
}

/// Output range of the sigmoid-to-γ mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRange {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub alpha: f64,
}

impl GammaRange {
    pub fn new(gamma_min: f64, gamma_max: f64, alpha: f64) -> Result<Self> {
        let r = Self {
            gamma_min,
            gamma_max,
            alpha,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma_min < self.gamma_max) {
            return Err(Error::InvalidParameter(format!(
                "empty gamma range [{}, {}]",
                self.gamma_min, self.gamma_max
            )));
        }
        Ok(())
    }

    /// KITTI setting: [−0.1, 5.0], α = 0.5.
    pub fn kitti() -> Self {
        Self {
            gamma_min: -0.1,
            gamma_max: 5.0,
            alpha: 0.5,
        }
    }

    /// RSRD setting: [−0.5, 2.0], α = 0.5.
    pub fn rsrd() -> Self {
        Self {
            gamma_min: -0.5,
            gamma_max: 2.0,
            alpha: 0.5,
        }
    }
}

/// Maps a sigmoid activation linearly in the log domain, then back to γ.
pub fn sigmoid_to_gamma(sigma: f64, range: &GammaRange) -> Result<f64> {
    range.validate()?;
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} outside [0, 1]")));
    }
    let lo = gamma_to_logspace(range.gamma_min, range.alpha)?;
    let hi = gamma_to_logspace(range.gamma_max, range.alpha)?;
    logspace_to_gamma(lo + (hi - lo) * sigma, range.alpha)
}

/// [`sigmoid_to_gamma`] applied to every valid pixel of a sigmoid map.
pub fn sigmoid_field_to_gamma(sigma: &ScalarField, range: &GammaRange) -> Result<ScalarField> {
    let mut out = Vec::with_capacity(sigma.data().len());
    for (&s, &ok) in sigma.data().iter().zip(sigma.validity()) {
        out.push(if ok { sigmoid_to_gamma(s, range)? } else { 0.0 });
    }
    ScalarField::with_validity(
        sigma.width(),
        sigma.height(),
        FieldRole::Gamma,
        out,
        sigma.validity().to_vec(),
    )
}

/// Metric depth from γ given the road plane: `d = h_c / (γ + n_down·K⁻¹p)`.
///
/// Pixels whose denominator is at or below [`DENOM_EPS`] (at or above the
/// horizon) are marked invalid.
pub fn depth_from_gamma(
    gamma: &ScalarField,
    plane: &PlaneModel,
    k: &CameraIntrinsics,
) -> Result<ScalarField> {
    gamma.expect_role(FieldRole::Gamma)?;
    let n_down = plane.downward();
    let h_c = plane.camera_height();
    Ok(ScalarField::from_fn(
        gamma.width(),
        gamma.height(),
        FieldRole::Depth,
        |u, v| {
            let g = gamma.get(u, v)?;
            let denom = g + n_down.dot(&k.ray(u as f64, v as f64));
            (denom > DENOM_EPS).then(|| h_c / denom)
        },
    ))
}

/// Height above the plane, `h = γ·d`; invalid where either input is.
pub fn height_from_gamma(gamma: &ScalarField, depth: &ScalarField) -> Result<ScalarField> {
    gamma.expect_role(FieldRole::Gamma)?;
    depth.expect_role(FieldRole::Depth)?;
    gamma.expect_same_shape(depth.dims())?;
    Ok(ScalarField::from_fn(
        gamma.width(),
        gamma.height(),
        FieldRole::Height,
        |u, v| Some(gamma.get(u, v)? * depth.get(u, v)?),
    ))
}

/// γ of every valid depth pixel relative to `plane`: `(n·P + h_c) / D`.
pub fn gamma_from_depth_plane(
    depth: &ScalarField,
    plane: &PlaneModel,
    k: &CameraIntrinsics,
) -> Result<ScalarField> {
    depth.expect_role(FieldRole::Depth)?;
    Ok(ScalarField::from_fn(
        depth.width(),
        depth.height(),
        FieldRole::Gamma,
        |u, v| {
            let d = depth.get(u, v)?;
            let p = k.ray(u as f64, v as f64) * d;
            Some(plane.height_of(&p) / d)
        },
    ))
}

/// Center of the residual parallax field in the target image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epipole {
    pub u: f64,
    pub v: f64,
    /// Forward offset of the source camera center in the target frame
    /// (meters); positive when the source camera is ahead of the target.
    pub t_z: f64,
}

impl Epipole {
    pub fn new(u: f64, v: f64, t_z: f64) -> Result<Self> {
        if !(t_z.abs() > 1e-9) || !u.is_finite() || !v.is_finite() {
            return Err(Error::DegenerateTranslation);
        }
        Ok(Self { u, v, t_z })
    }

    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.u, self.v)
    }
}

/// Projection of the source camera center `C = −Rᵀt` into the target image.
///
/// For a pure translation this is `K·t / t_z`.
pub fn epipole(k: &CameraIntrinsics, pose: &RelativePose) -> Result<Epipole> {
    let c = pose.source_center();
    if !(c.z.abs() > 1e-9) {
        return Err(Error::DegenerateTranslation);
    }
    let e = k.project_unchecked(&c);
    Epipole::new(e.u, e.v, c.z)
}

/// Residual parallax flow
/// `u = −(γ·T_z/h_c) / (1 − γ·T_z/h_c) · (p − e)`.
///
/// `h_c` is the height of the source camera center above the plane (see
/// [`source_height`]); it is the target camera height whenever the motion is
/// parallel to the road.
///
/// The flow points from the homography-aligned source position to the target
/// pixel, so the aligned image is sampled at `p − u`. Pixels where
/// `1 − γ·T_z/h_c` falls below [`DENOM_EPS`] are invalid.
pub fn residual_flow(
    gamma: &ScalarField,
    t_z: f64,
    h_c: f64,
    epi: &Epipole,
) -> Result<(ScalarField, ScalarField)> {
    gamma.expect_role(FieldRole::Gamma)?;
    if !(h_c > 0.0) {
        return Err(Error::InvalidParameter(format!("camera height must be positive, got {h_c}")));
    }
    if !(t_z.abs() > 1e-9) {
        return Err(Error::DegenerateTranslation);
    }
    let (w, h) = gamma.dims();
    let ratio = t_z / h_c;
    let factor = |u: usize, v: usize| -> Option<f64> {
        let g = gamma.get(u, v)?;
        let denom = 1.0 - g * ratio;
        (denom >= DENOM_EPS).then(|| -g * ratio / denom)
    };
    let fu = ScalarField::from_fn(w, h, FieldRole::FlowU, |u, v| {
        factor(u, v).map(|f| f * (u as f64 - epi.u))
    });
    let fv = ScalarField::from_fn(w, h, FieldRole::FlowV, |u, v| {
        factor(u, v).map(|f| f * (v as f64 - epi.v))
    });
    Ok((fu, fv))
}

/// Height of the source camera center above `plane` (target frame).
pub fn source_height(plane: &PlaneModel, pose: &RelativePose) -> f64 {
    plane.height_of(&pose.source_center())
}

/// Ray through pixel `(u, v)` dotted with the downward normal; positive below
/// the horizon.
pub fn plane_ray_dot(plane: &PlaneModel, k: &CameraIntrinsics, u: f64, v: f64) -> f64 {
    plane.downward().dot(&k.ray(u, v))
}

/// Depth of the plane along the ray through `(u, v)`, if it hits the plane.
pub fn plane_depth(plane: &PlaneModel, k: &CameraIntrinsics, u: f64, v: f64) -> Option<f64> {
    let denom = plane_ray_dot(plane, k, u, v);
    (denom > DENOM_EPS).then(|| plane.camera_height() / denom)
}
