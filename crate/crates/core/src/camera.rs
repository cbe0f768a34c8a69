//! Pinhole camera model.
//!
//! Camera frame: x right, y down, z forward. Pixel centers sit at integer
//! coordinates, so `p = [u, v, 1]` for the pixel in column `u`, row `v`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldRole, PointCloud, RgbImage, ScalarField};

/// Continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, 1.0)
    }
}

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<CameraRepr> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: CameraRepr) -> Result<Self> {
        Self::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<CameraIntrinsics> for CameraRepr {
    fn from(k: CameraIntrinsics) -> Self {
        Self { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Viewing ray `K⁻¹ [u, v, 1]ᵀ`, normalized to unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// `depth · K⁻¹ p`.
    pub fn backproject(&self, px: Pixel, depth: f64) -> Result<Vector3<f64>> {
        if !depth.is_finite() || depth <= 0.0 {
            return Err(Error::InvalidDepth(depth));
        }
        Ok(self.ray(px.u, px.v) * depth)
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Pixel> {
        if !(point.z > 0.0) {
            return Err(Error::BehindCamera(point.z));
        }
        Ok(self.project_unchecked(point))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, point: &Vector3<f64>) -> Pixel {
        Pixel::new(
            self.cx + self.fx * point.x / point.z,
            self.cy + self.fy * point.y / point.z,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// One point per valid depth pixel, colored from `color` when supplied.
pub fn depth_to_pointcloud(
    depth: &ScalarField,
    k: &CameraIntrinsics,
    color: Option<&RgbImage>,
) -> Result<PointCloud> {
    depth.expect_role(FieldRole::Depth)?;
    if let Some(img) = color {
        img.expect_same_shape(depth.dims())?;
    }
    let mut points = Vec::with_capacity(depth.valid_count());
    let mut colors = color.map(|_| Vec::with_capacity(depth.valid_count()));
    for (u, v, d) in depth.iter_valid() {
        let p = k.ray(u as f64, v as f64) * d as f64;
        points.push([p.x as f32, p.y as f32, p.z as f32]);
        if let (Some(cs), Some(img)) = (colors.as_mut(), color) {
            cs.push(img.pixel(u, v));
        }
    }
    Ok(PointCloud { points, colors })
}

/// Image-plane gap `f·h/d` between a point at height `h` and its ground
/// footprint at depth `d`. Invariant under `(h, d) → (s·h, s·d)`.
pub fn projected_gap(f: f64, h: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidDepth(d));
    }
    Ok(f * h / d)
}
