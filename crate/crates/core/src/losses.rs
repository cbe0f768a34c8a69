//! Forward evaluation of the self-supervised objectives.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, RgbImage, ScalarField};
use crate::gamma::{depth_from_gamma, epipole, residual_flow, source_height};
use crate::geometry::{PlaneModel, RelativePose};
use crate::planefit::{road_mask, RoadMaskConfig};
use crate::warp::{bilinear_sample, depth_reprojection_grid, homography_warp, parallax_warp, plane_homography};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha_ssim: f64,
    pub lambda_norm: f64,
    pub lambda_smooth: f64,
    /// Hinge angle of the normal term, degrees.
    pub theta_thres: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_ssim: 0.85,
            lambda_norm: 0.1,
            lambda_smooth: 0.01,
            theta_thres: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_ssim) {
            return Err(Error::InvalidParameter(format!("alpha_ssim {} outside [0, 1]", self.alpha_ssim)));
        }
        if !(self.lambda_norm >= 0.0 && self.lambda_smooth >= 0.0 && self.theta_thres >= 0.0) {
            return Err(Error::InvalidParameter("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub photo: f64,
    pub homo: f64,
    pub norm: f64,
    pub smooth: f64,
}

/// Per-pixel maps behind a full evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMaps {
    pub photo_depth: ScalarField,
    pub photo_flow: ScalarField,
    pub automask_depth: ScalarField,
    pub automask_flow: ScalarField,
    pub road_mask: ScalarField,
    pub homo: ScalarField,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub photo: f64,
    pub homo: f64,
    pub norm: f64,
    pub smooth: f64,
    pub total: f64,
    /// The depth-warp and flow-warp halves of `photo`, when known.
    pub photo_depth: Option<f64>,
    pub photo_flow: Option<f64>,
    #[serde(skip)]
    pub maps: Option<LossMaps>,
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

/// Channel-averaged SSIM over 3×3 box windows with reflection padding.
///
/// A pixel is valid only if all nine taps are valid in both images.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<ScalarField> {
    a.expect_same_shape(b.dims())?;
    let (w, h) = a.dims();
    Ok(ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        let mut taps = [(0usize, 0usize); 9];
        let mut i = 0;
        for dv in -1..=1isize {
            for du in -1..=1isize {
                let t = (reflect(u as isize + du, w), reflect(v as isize + dv, h));
                if !a.is_valid(t.0, t.1) || !b.is_valid(t.0, t.1) {
                    return None;
                }
                taps[i] = t;
                i += 1;
            }
        }
        let mut total = 0.0;
        for c in 0..3 {
            let xs = taps.map(|(x, y)| a.pixel(x, y)[c] as f64);
            let ys = taps.map(|(x, y)| b.pixel(x, y)[c] as f64);
            let mx = xs.iter().sum::<f64>() / 9.0;
            let my = ys.iter().sum::<f64>() / 9.0;
            let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
            for k in 0..9 {
                let (dx, dy) = (xs[k] - mx, ys[k] - my);
                sx += dx * dx;
                sy += dy * dy;
                sxy += dx * dy;
            }
            let (sx, sy, sxy) = (sx / 9.0, sy / 9.0, sxy / 9.0);
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (sx + sy + SSIM_C2);
            total += (num / den).clamp(-1.0, 1.0);
        }
        Some(total / 3.0)
    }))
}

/// `pe = α (1 − SSIM)/2 + (1 − α) |pred − target|₁`, channel-averaged.
pub fn photometric_error(pred: &RgbImage, target: &RgbImage, alpha: f64) -> Result<ScalarField> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let s = ssim(pred, target)?;
    let (w, h) = pred.dims();
    Ok(ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        let sv = s.get(u, v)?;
        let (p, t) = (pred.pixel(u, v), target.pixel(u, v));
        let l1 = (0..3).map(|c| (p[c] as f64 - t[c] as f64).abs()).sum::<f64>() / 3.0;
        let d = (1.0 - sv) / 2.0;
        Some(alpha * d.clamp(0.0, 1.0) + (1.0 - alpha) * l1)
    }))
}

fn pixelwise_min(maps: &[ScalarField]) -> Result<ScalarField> {
    let first = maps.first().ok_or(Error::EmptyInput)?;
    for m in maps {
        first.expect_same_shape(m.dims())?;
    }
    let (w, h) = first.dims();
    Ok(ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        maps.iter().filter_map(|m| m.get(u, v)).reduce(f64::min)
    }))
}

/// Per-pixel minimum over sources and the auto-mask (1 where the best warped
/// error beats the best identity error).
pub fn min_reprojection(pe_maps: &[ScalarField], identity_pe_maps: &[ScalarField]) -> Result<(ScalarField, ScalarField)> {
    if pe_maps.is_empty() || identity_pe_maps.len() != pe_maps.len() {
        return Err(Error::EmptyInput);
    }
    let warped = pixelwise_min(pe_maps)?;
    let ident = pixelwise_min(identity_pe_maps)?;
    warped.expect_same_shape(ident.dims())?;
    let (w, h) = warped.dims();
    let mask = ScalarField::from_fn(w, h, FieldRole::Mask, |u, v| {
        let m = match (warped.get(u, v), ident.get(u, v)) {
            (Some(p), Some(i)) => p < i,
            (Some(_), None) => true,
            _ => false,
        };
        Some(if m { 1.0 } else { 0.0 })
    });
    Ok((warped, mask))
}

/// Mean over pixels with a valid warped error of the auto-masked minimum:
/// the warped error where the mask is set, the identity error elsewhere.
pub fn masked_photo_term(pe_maps: &[ScalarField], identity_pe_maps: &[ScalarField]) -> Result<(f64, ScalarField, ScalarField)> {
    let (warped, mask) = min_reprojection(pe_maps, identity_pe_maps)?;
    let ident = pixelwise_min(identity_pe_maps)?;
    let (w, h) = warped.dims();
    let per_pixel = ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        let p = warped.get(u, v)?;
        Some(if mask.get(u, v) == Some(1.0) { p } else { ident.get(u, v).unwrap_or(p) })
    });
    let value = per_pixel.mean().ok_or(Error::EmptyEvaluation)?;
    Ok((value, per_pixel, mask))
}

/// Mean over valid pixels of `M_road · pe(I_s^w, I_t)`.
pub fn homography_loss(warped: &RgbImage, target: &RgbImage, mask: &ScalarField, alpha: f64) -> Result<f64> {
    Ok(homography_loss_map(warped, target, mask, alpha)?
        .mean()
        .unwrap_or(0.0))
}

fn homography_loss_map(warped: &RgbImage, target: &RgbImage, mask: &ScalarField, alpha: f64) -> Result<ScalarField> {
    mask.expect_role(FieldRole::Mask)?;
    target.expect_same_shape(mask.dims())?;
    let pe = photometric_error(warped, target, alpha)?;
    let (w, h) = pe.dims();
    Ok(ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        Some(mask.get(u, v)? * pe.get(u, v)?)
    }))
}

fn check_unit(n: &Vector3<f64>) -> Result<()> {
    if !((n.norm() - 1.0).abs() <= 1e-6) {
        return Err(Error::InvalidParameter(format!("normal {n:?} is not unit length")));
    }
    Ok(())
}

/// `(1 − cos Δθ) + ReLU(cos θ_thres − cos Δθ)²`, `theta_thres` in degrees.
pub fn normal_consistency(n_pred: &Vector3<f64>, n_ref: &Vector3<f64>, theta_thres: f64) -> Result<f64> {
    check_unit(n_pred)?;
    check_unit(n_ref)?;
    let c = (n_pred.dot(n_ref) / (n_pred.norm() * n_ref.norm())).clamp(-1.0, 1.0);
    let hinge = (theta_thres.to_radians().cos() - c).max(0.0);
    Ok((1.0 - c) + hinge * hinge)
}

/// Edge-aware first-order smoothness of `field / mean|field|`, gradients
/// damped by `exp(−|∂I|)` (channel mean). Sum of the x and y means.
pub fn smoothness(field: &ScalarField, guide: &RgbImage) -> Result<f64> {
    guide.expect_same_shape(field.dims())?;
    let (w, h) = field.dims();
    let mut abs_sum = 0.0;
    let mut n = 0usize;
    for (_, _, x) in field.iter_valid() {
        abs_sum += x.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let scale = abs_sum / n as f64;
    if !(scale > 1e-12) {
        return Ok(0.0);
    }
    let img_grad = |a: (usize, usize), b: (usize, usize)| -> Option<f64> {
        if !guide.is_valid(a.0, a.1) || !guide.is_valid(b.0, b.1) {
            return None;
        }
        let (p, q) = (guide.pixel(a.0, a.1), guide.pixel(b.0, b.1));
        Some((0..3).map(|c| (p[c] as f64 - q[c] as f64).abs()).sum::<f64>() / 3.0)
    };
    let term = |pairs: &mut dyn Iterator<Item = ((usize, usize), (usize, usize))>| -> f64 {
        let (mut s, mut m) = (0.0, 0usize);
        for (a, b) in pairs {
            let (Some(fa), Some(fb)) = (field.get(a.0, a.1), field.get(b.0, b.1)) else { continue };
            let Some(g) = img_grad(a, b) else { continue };
            s += ((fa - fb) / scale).abs() * (-g).exp();
            m += 1;
        }
        if m == 0 { 0.0 } else { s / m as f64 }
    };
    let gx = term(&mut (0..h).flat_map(|v| (0..w.saturating_sub(1)).map(move |u| ((u, v), (u + 1, v)))));
    let gy = term(&mut (0..h.saturating_sub(1)).flat_map(|v| (0..w).map(move |u| ((u, v), (u, v + 1)))));
    Ok(gx + gy)
}

/// `total = photo + homo + λ_norm·norm + λ_smooth·smooth`.
pub fn total_loss(c: &LossComponents, weights: &LossWeights) -> LossReport {
    LossReport {
        photo: c.photo,
        homo: c.homo,
        norm: c.norm,
        smooth: c.smooth,
        total: c.photo + c.homo + weights.lambda_norm * c.norm + weights.lambda_smooth * c.smooth,
        photo_depth: None,
        photo_flow: None,
        maps: None,
    }
}

/// One source view and its pose `T_{t→s}`.
#[derive(Debug, Clone)]
pub struct SourceView<'a> {
    pub image: &'a RgbImage,
    pub pose: RelativePose,
}

/// Everything the full objective needs for one target frame.
#[derive(Debug, Clone)]
pub struct LossInputs<'a> {
    pub target: &'a RgbImage,
    pub sources: Vec<SourceView<'a>>,
    pub gamma: &'a ScalarField,
    /// Predicted road plane (normal and camera height).
    pub plane: PlaneModel,
    pub k: CameraIntrinsics,
    pub n_ref: Vector3<f64>,
    /// Extra per-pixel validity (e.g. co-visibility); `None` keeps all pixels.
    pub valid_mask: Option<&'a [bool]>,
}

/// Synthesizes both target reconstructions for every source and evaluates
/// all loss terms. The homography term is averaged over sources.
pub fn evaluate_objective(inputs: &LossInputs, weights: &LossWeights, mask_cfg: &RoadMaskConfig) -> Result<LossReport> {
    weights.validate()?;
    let target = inputs.target;
    let (w, h) = target.dims();
    inputs.gamma.expect_same_shape((w, h))?;
    if inputs.sources.is_empty() {
        return Err(Error::EmptyInput);
    }
    let keep = |img: RgbImage| match inputs.valid_mask {
        Some(m) => img.masked(m),
        None => img,
    };
    let k = &inputs.k;
    let plane = &inputs.plane;
    let alpha = weights.alpha_ssim;
    let depth = depth_from_gamma(inputs.gamma, plane, k)?;
    let m_road = road_mask(&depth, k, plane.normal(), mask_cfg)?;

    let (mut pe_d, mut pe_f, mut pe_id) = (Vec::new(), Vec::new(), Vec::new());
    let mut homo_maps = Vec::new();
    for src in &inputs.sources {
        src.image.expect_same_shape((w, h))?;
        let grid = depth_reprojection_grid(&depth, &src.pose, k)?;
        let i_d = keep(bilinear_sample(src.image, &grid)?);
        let hom = plane_homography(&src.pose, plane, k)?;
        let i_w = keep(homography_warp(src.image, &hom)?);
        let epi = epipole(k, &src.pose)?;
        let (fu, fv) = residual_flow(inputs.gamma, epi.t_z, source_height(plane, &src.pose), &epi)?;
        let i_f = keep(parallax_warp(src.image, &hom, &fu, &fv)?);
        pe_d.push(photometric_error(&i_d, target, alpha)?);
        pe_f.push(photometric_error(&i_f, target, alpha)?);
        pe_id.push(photometric_error(&keep(src.image.clone()), target, alpha)?);
        homo_maps.push(homography_loss_map(&i_w, target, &m_road, alpha)?);
    }
    let (l_d, map_d, mask_d) = masked_photo_term(&pe_d, &pe_id)?;
    let (l_f, map_f, mask_f) = masked_photo_term(&pe_f, &pe_id)?;
    let homo = homo_maps.iter().map(|m| m.mean().unwrap_or(0.0)).sum::<f64>() / homo_maps.len() as f64;
    let norm = normal_consistency(plane.normal(), &inputs.n_ref, weights.theta_thres)?;
    let smooth = smoothness(inputs.gamma, target)?;
    let mut report = total_loss(
        &LossComponents { photo: l_d + l_f, homo, norm, smooth },
        weights,
    );
    report.photo_depth = Some(l_d);
    report.photo_flow = Some(l_f);
    report.maps = Some(LossMaps {
        photo_depth: map_d,
        photo_flow: map_f,
        automask_depth: mask_d,
        automask_flow: mask_f,
        road_mask: m_road,
        homo: homo_maps.swap_remove(0),
    });
    Ok(report)
}
