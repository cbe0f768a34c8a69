//! Backward warping: every warp builds a target→source sampling grid and
//! gathers from the source with bilinear interpolation.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, RgbImage, ScalarField};
use crate::gamma::{epipole, residual_flow, source_height};
use crate::geometry::{PlaneModel, RelativePose};

/// Pixel→pixel map from target to source coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    /// Normalizes to `h33 = 1` when `|h33| > 1e-9`.
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("homography has non-finite entries".into()));
        }
        let h33 = matrix[(2, 2)];
        let matrix = if h33.abs() > 1e-9 { matrix / h33 } else { matrix };
        if !(matrix.determinant().abs() > 1e-12) {
            return Err(Error::DegeneratePlane);
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// `self · other`: sampling with `other` first, then `self`, equals
    /// sampling once with this product.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(self.matrix * other.matrix)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.matrix.try_inverse().ok_or(Error::DegeneratePlane)?;
        Self::new(inv)
    }

    /// Maps `(u, v)`; `None` on the line at infinity.
    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let p = self.matrix * Vector3::new(u, v, 1.0);
        (p.z.abs() > 1e-12).then(|| (p.x / p.z, p.y / p.z))
    }
}

/// Homography induced by the road plane, mapping target pixels to source
/// pixels: `H = K (R + t N_downᵀ / h_c) K⁻¹`.
pub fn plane_homography(pose: &RelativePose, plane: &PlaneModel, k: &CameraIntrinsics) -> Result<Homography> {
    let h_c = plane.camera_height();
    if !(h_c > 1e-9) {
        return Err(Error::DegeneratePlane);
    }
    let m = pose.rotation() + pose.translation() * plane.downward().transpose() / h_c;
    Homography::new(k.matrix() * m * k.inverse_matrix())
}

/// Per-target-pixel source coordinates.
///
/// Coordinates are kept even when they fall outside the source image (for
/// geometric comparisons); such entries are not valid for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    width: usize,
    height: usize,
    src_width: usize,
    src_height: usize,
    coords: Vec<Option<(f64, f64)>>,
}

impl SamplingGrid {
    pub fn from_fn<F>(width: usize, height: usize, src_width: usize, src_height: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Option<(f64, f64)>,
    {
        let mut coords = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                coords.push(f(u, v).filter(|(x, y)| x.is_finite() && y.is_finite()));
            }
        }
        Self { width, height, src_width, src_height, coords }
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, width, height, |u, v| Some((u as f64, v as f64)))
    }

    pub fn from_homography(h: &Homography, width: usize, height: usize) -> Self {
        Self::from_fn(width, height, width, height, |u, v| h.apply(u as f64, v as f64))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Source coordinates wherever they are defined, in bounds or not.
    pub fn coords(&self, u: usize, v: usize) -> Option<(f64, f64)> {
        self.coords[v * self.width + u]
    }

    /// Source coordinates if they lie within `[0, w−1] × [0, h−1]`.
    pub fn get(&self, u: usize, v: usize) -> Option<(f64, f64)> {
        self.coords(u, v).filter(|&(x, y)| self.in_bounds(x, y))
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v).is_some()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .filter(|&(u, v)| self.is_valid(u, v))
            .count()
    }

    fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.src_width - 1) as f64 && y <= (self.src_height - 1) as f64
    }
}

/// Bilinear gather. A target pixel is valid only if its grid entry is in
/// bounds and every source tap with nonzero weight is valid.
pub fn bilinear_sample(img: &RgbImage, grid: &SamplingGrid) -> Result<RgbImage> {
    img.expect_same_shape((grid.src_width, grid.src_height))?;
    let (w, h) = img.dims();
    Ok(RgbImage::from_fn(grid.width, grid.height, |u, v| {
        let (x, y) = grid.get(u, v)?;
        let x0 = (x.floor() as usize).min(w - 1);
        let y0 = (y.floor() as usize).min(h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        let taps = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
        if taps.iter().any(|&(a, b)| !img.is_valid(a, b)) {
            return None;
        }
        let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let mut out = [0.0f64; 3];
        for (&(a, b), &wt) in taps.iter().zip(&weights) {
            let px = img.pixel(a, b);
            for c in 0..3 {
                out[c] += wt * px[c] as f64;
            }
        }
        Some(out.map(|c| c as f32))
    }))
}

/// `I_s^w(p) = I_s(H p)`.
pub fn homography_warp(img: &RgbImage, h: &Homography) -> Result<RgbImage> {
    let (w, ht) = img.dims();
    bilinear_sample(img, &SamplingGrid::from_homography(h, w, ht))
}

/// Samples `img` at `p − flow(p)`; pixels with invalid flow are invalid.
pub fn flow_warp(img: &RgbImage, flow_u: &ScalarField, flow_v: &ScalarField) -> Result<RgbImage> {
    flow_u.expect_role(FieldRole::FlowU)?;
    flow_v.expect_role(FieldRole::FlowV)?;
    img.expect_same_shape(flow_u.dims())?;
    img.expect_same_shape(flow_v.dims())?;
    let (w, h) = img.dims();
    let grid = SamplingGrid::from_fn(w, h, w, h, |u, v| {
        Some((u as f64 - flow_u.get(u, v)?, v as f64 - flow_v.get(u, v)?))
    });
    bilinear_sample(img, &grid)
}

/// `I_s(H (p − flow(p)))` in a single resampling: the same image as
/// `flow_warp(homography_warp(img, h), flow)` without interpolating twice.
pub fn parallax_warp(img: &RgbImage, h: &Homography, flow_u: &ScalarField, flow_v: &ScalarField) -> Result<RgbImage> {
    flow_u.expect_role(FieldRole::FlowU)?;
    flow_v.expect_role(FieldRole::FlowV)?;
    img.expect_same_shape(flow_u.dims())?;
    img.expect_same_shape(flow_v.dims())?;
    let (w, ht) = img.dims();
    let grid = SamplingGrid::from_fn(w, ht, w, ht, |u, v| {
        h.apply(u as f64 - flow_u.get(u, v)?, v as f64 - flow_v.get(u, v)?)
    });
    bilinear_sample(img, &grid)
}

/// `p_s = K (R D K⁻¹ p_t + t)`; points at or behind the source camera are
/// undefined.
pub fn depth_reprojection_grid(depth: &ScalarField, pose: &RelativePose, k: &CameraIntrinsics) -> Result<SamplingGrid> {
    depth.expect_role(FieldRole::Depth)?;
    let (w, h) = depth.dims();
    Ok(SamplingGrid::from_fn(w, h, k.width, k.height, |u, v| {
        let d = depth.get(u, v)?;
        let ps = pose.transform_point(&(k.ray(u as f64, v as f64) * d));
        if !(ps.z > 1e-9) {
            return None;
        }
        let px = k.project(&ps).ok()?;
        Some((px.u, px.v))
    }))
}

/// Per-pixel distance between the depth reprojection grid and the
/// homography-plus-residual-flow grid `H (p − u_res)`.
pub fn parallax_discrepancy(
    depth: &ScalarField,
    gamma: &ScalarField,
    plane: &PlaneModel,
    pose: &RelativePose,
    k: &CameraIntrinsics,
) -> Result<ScalarField> {
    depth.expect_same_shape(gamma.dims())?;
    let epi = epipole(k, pose)?;
    let hom = plane_homography(pose, plane, k)?;
    let (fu, fv) = residual_flow(gamma, epi.t_z, source_height(plane, pose), &epi)?;
    let grid = depth_reprojection_grid(depth, pose, k)?;
    let (w, h) = depth.dims();
    Ok(ScalarField::from_fn(w, h, FieldRole::Scalar, |u, v| {
        grid.get(u, v)?;
        let (xd, yd) = grid.coords(u, v)?;
        let q = (u as f64 - fu.get(u, v)?, v as f64 - fv.get(u, v)?);
        let (xh, yh) = hom.apply(q.0, q.1)?;
        Some((xd - xh).hypot(yd - yh))
    }))
}

/// Maximum of [`parallax_discrepancy`] over pixels farther than
/// `guard_radius` from the epipole.
pub fn parallax_decomposition_check(
    depth: &ScalarField,
    gamma: &ScalarField,
    plane: &PlaneModel,
    pose: &RelativePose,
    k: &CameraIntrinsics,
    guard_radius: f64,
) -> Result<f64> {
    let epi = epipole(k, pose)?;
    let field = parallax_discrepancy(depth, gamma, plane, pose, k)?;
    field
        .iter_valid()
        .filter(|&(u, v, _)| (u as f64 - epi.u).hypot(v as f64 - epi.v) > guard_radius)
        .map(|(_, _, d)| d)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
        .ok_or(Error::EmptyEvaluation)
}
