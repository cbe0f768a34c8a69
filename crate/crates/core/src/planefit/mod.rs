//! Ground-plane discovery and road masking.

mod mask;
mod normals;
mod ransac;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mask::{angular_deviation, gaussian_prior, road_mask, road_probability, RoadMaskConfig};
pub use normals::local_normals;
pub use ransac::{count_inliers, gamma_from_depth_ransac, ransac_plane, FittedPlane, RansacConfig};

/// Trapezoidal region of interest in normalized image coordinates
/// (x right, y down, both in [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Trapezoid {
    /// Normalized row of the top edge.
    pub top: f64,
    /// Normalized row of the bottom edge.
    pub bottom: f64,
    /// Width of the top edge as a fraction of the image width.
    pub top_width: f64,
    /// Width of the bottom edge as a fraction of the image width.
    pub bottom_width: f64,
    /// Normalized column of the axis of symmetry.
    pub center_x: f64,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Self {
            top: 0.45,
            bottom: 1.0,
            top_width: 0.4,
            bottom_width: 1.0,
            center_x: 0.5,
        }
    }
}

impl Trapezoid {
    /// The whole image.
    pub fn full() -> Self {
        Self {
            top: 0.0,
            bottom: 1.0,
            top_width: 1.0,
            bottom_width: 1.0,
            center_x: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(in_unit(self.top) && in_unit(self.bottom) && self.top < self.bottom)
            || !(self.top_width >= 0.0 && self.bottom_width >= 0.0)
            || !self.center_x.is_finite()
        {
            return Err(Error::InvalidParameter(format!("malformed trapezoid {self:?}")));
        }
        Ok(())
    }

    /// Whether the center of pixel `(u, v)` lies inside, for a `w × h` image.
    pub fn contains(&self, u: usize, v: usize, w: usize, h: usize) -> bool {
        let x = (u as f64 + 0.5) / w as f64;
        let y = (v as f64 + 0.5) / h as f64;
        if y < self.top || y > self.bottom {
            return false;
        }
        let t = (y - self.top) / (self.bottom - self.top);
        let half = 0.5 * (self.top_width + t * (self.bottom_width - self.top_width));
        (x - self.center_x).abs() <= half
    }

    /// Row-major inclusion mask for a `w × h` image.
    pub fn mask(&self, w: usize, h: usize) -> Vec<bool> {
        (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| self.contains(u, v, w, h))
            .collect()
    }
}
