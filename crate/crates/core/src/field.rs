//! Per-pixel containers.
//!
//! Every container carries an explicit validity flag per pixel. Invalid
//! pixels keep a placeholder value of zero and are skipped by every reduction;
//! NaN is never used as a sentinel in memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical meaning of the values stored in a [`ScalarField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldRole {
    /// Height-to-depth ratio (unitless).
    Gamma,
    /// Depth along the optical axis (meters).
    Depth,
    /// Height above the road plane (meters).
    Height,
    /// Probability in [0, 1].
    Mask,
    /// Horizontal flow (pixels).
    FlowU,
    /// Vertical flow (pixels).
    FlowV,
    /// Angle (radians).
    Angle,
    /// Untyped per-pixel quantity, e.g. an error map.
    Scalar,
}

/// Single-channel `width × height` map stored row-major in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    role: FieldRole,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl ScalarField {
    /// Builds a field with every pixel valid, checking the role invariants.
    pub fn new(width: usize, height: usize, role: FieldRole, data: Vec<f64>) -> Result<Self> {
        let valid = vec![true; data.len()];
        Self::with_validity(width, height, role, data, valid)
    }

    /// Builds a field from values and an explicit validity mask.
    ///
    /// Fails if lengths disagree, if a valid value is non-finite, if a valid
    /// depth is not positive, or if a valid mask value leaves [0, 1].
    pub fn with_validity(
        width: usize,
        height: usize,
        role: FieldRole,
        mut data: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "field of {}x{} needs {} values, got {} values and {} flags",
                width,
                height,
                width * height,
                data.len(),
                valid.len()
            )));
        }
        for (i, (&x, &ok)) in data.iter().zip(&valid).enumerate() {
            if !ok {
                continue;
            }
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite value at index {i}")));
            }
            match role {
                FieldRole::Depth if x <= 0.0 => return Err(Error::InvalidDepth(x)),
                FieldRole::Mask if !(0.0..=1.0).contains(&x) => {
                    return Err(Error::InvalidParameter(format!(
                        "mask value {x} outside [0, 1] at index {i}"
                    )))
                }
                _ => {}
            }
        }
        for (x, &ok) in data.iter_mut().zip(&valid) {
            if !ok {
                *x = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            role,
            data,
            valid,
        })
    }

    /// Field with every pixel set to `value` and valid.
    pub fn filled(width: usize, height: usize, role: FieldRole, value: f64) -> Result<Self> {
        Self::new(width, height, role, vec![value; width * height])
    }

    /// Field with every pixel invalid.
    pub fn invalid(width: usize, height: usize, role: FieldRole) -> Self {
        Self {
            width,
            height,
            role,
            data: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Evaluates `f(u, v)` at every pixel; `None` marks the pixel invalid.
    ///
    /// Values that would break the role invariants are sanitized: non-finite
    /// values and non-positive depths become invalid, mask values are clamped
    /// to [0, 1].
    pub fn from_fn<F>(width: usize, height: usize, role: FieldRole, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Option<f64>,
    {
        let mut data = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                match f(u, v) {
                    Some(x) if sane(role, x) => {
                        data.push(if role == FieldRole::Mask {
                            x.clamp(0.0, 1.0)
                        } else {
                            x
                        });
                        valid.push(true);
                    }
                    _ => {
                        data.push(0.0);
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            width,
            height,
            role,
            data,
            valid,
        }
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

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Value at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = self.index(u, v);
        self.valid[i].then(|| self.data[i])
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[self.index(u, v)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Same data under a different role, re-checking the role invariants.
    pub fn with_role(self, role: FieldRole) -> Result<Self> {
        Self::with_validity(self.width, self.height, role, self.data, self.valid)
    }

    /// Fails unless the field carries `role`.
    pub fn expect_role(&self, role: FieldRole) -> Result<()> {
        if self.role == role {
            Ok(())
        } else {
            Err(Error::RoleError {
                expected: role,
                found: self.role,
            })
        }
    }

    /// Fails unless `other` has the same dimensions.
    pub fn expect_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() == other {
            Ok(())
        } else {
            Err(Error::shape(self.dims(), other))
        }
    }

    /// Iterates `(u, v, value)` over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(i, (&x, _))| (i % w, i / w, x))
    }

    /// Mean over valid pixels, accumulated in `f64`.
    pub fn mean(&self) -> Option<f64> {
        let (sum, n) = self
            .iter_valid()
            .fold((0.0f64, 0usize), |(s, n), (_, _, x)| (s + x, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Maximum over valid pixels.
    pub fn max(&self) -> Option<f64> {
        self.iter_valid().map(|(_, _, x)| x).reduce(f64::max)
    }

    /// Invalidates every pixel where `keep` is false.
    pub fn masked(mut self, keep: &[bool]) -> Self {
        for ((x, ok), &k) in self.data.iter_mut().zip(self.valid.iter_mut()).zip(keep) {
            if !k {
                *ok = false;
                *x = 0.0;
            }
        }
        self
    }
}

fn sane(role: FieldRole, x: f64) -> bool {
    x.is_finite() && !(role == FieldRole::Depth && x <= 0.0)
}

/// Three-channel image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        let valid = vec![true; data.len()];
        Self::with_validity(width, height, data, valid)
    }

    pub fn with_validity(
        width: usize,
        height: usize,
        mut data: Vec<[f32; 3]>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if data.len() != width * height || valid.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "image of {}x{} needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        for (px, &ok) in data.iter_mut().zip(&valid) {
            if !ok {
                *px = [0.0; 3];
            } else if px.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidParameter(format!(
                    "channel value outside [0, 1]: {px:?}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    /// Evaluates `f(u, v)` per pixel; channels are clamped to [0, 1].
    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Option<[f32; 3]>,
    {
        let mut data = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                match f(u, v) {
                    Some(px) if px.iter().all(|c| c.is_finite()) => {
                        data.push(px.map(|c| c.clamp(0.0, 1.0)));
                        valid.push(true);
                    }
                    _ => {
                        data.push([0.0; 3]);
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            width,
            height,
            data,
            valid,
        }
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

    pub fn data(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Invalidates every pixel where `keep` is false.
    pub fn masked(mut self, keep: &[bool]) -> Self {
        for ((px, ok), &k) in self.data.iter_mut().zip(self.valid.iter_mut()).zip(keep) {
            if !k {
                *ok = false;
                *px = [0.0; 3];
            }
        }
        self
    }

    pub fn expect_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() == other {
            Ok(())
        } else {
            Err(Error::shape(self.dims(), other))
        }
    }
}

/// Per-pixel unit normal vectors in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
    valid: Vec<bool>,
}

impl NormalField {
    /// Evaluates `f(u, v)`; returned vectors are normalized, and vectors with
    /// norm below 1e-12 mark the pixel invalid.
    pub fn from_fn<F>(width: usize, height: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Option<[f64; 3]>,
    {
        let mut data = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                let n = f(u, v).and_then(|n| {
                    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                    (norm.is_finite() && norm >= 1e-12)
                        .then(|| [n[0] / norm, n[1] / norm, n[2] / norm])
                });
                valid.push(n.is_some());
                data.push(n.unwrap_or([0.0; 3]));
            }
        }
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    /// Same normal at every pixel.
    pub fn constant(width: usize, height: usize, n: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| Some(n))
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

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<[f64; 3]> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.data[i])
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

/// 3D points in the camera frame, optionally colored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    /// Per-point color in [0, 1]; same length as `points` when present.
    pub colors: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_pixels_are_zeroed_and_skipped() {
        let f = ScalarField::with_validity(
            2,
            1,
            FieldRole::Gamma,
            vec![3.0, 1.0],
            vec![false, true],
        )
        .unwrap();
        assert_eq!(f.data(), &[0.0, 1.0]);
        assert_eq!(f.get(0, 0), None);
        assert_eq!(f.mean(), Some(1.0));
    }

    #[test]
    fn depth_role_rejects_non_positive() {
        assert!(ScalarField::new(1, 1, FieldRole::Depth, vec![0.0]).is_err());
        let f = ScalarField::from_fn(2, 1, FieldRole::Depth, |u, _| Some(u as f64));
        assert_eq!(f.validity(), &[false, true]);
    }

    #[test]
    fn mask_role_enforces_unit_interval() {
        assert!(ScalarField::new(1, 1, FieldRole::Mask, vec![1.5]).is_err());
        let f = ScalarField::from_fn(1, 1, FieldRole::Mask, |_, _| Some(1.5));
        assert_eq!(f.get(0, 0), Some(1.0));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(ScalarField::new(2, 2, FieldRole::Gamma, vec![0.0; 3]).is_err());
        assert!(RgbImage::new(1, 2, vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn rgb_range_is_checked() {
        assert!(RgbImage::new(1, 1, vec![[0.0, 1.2, 0.0]]).is_err());
    }

    #[test]
    fn normal_field_drops_zero_vectors() {
        let n = NormalField::from_fn(2, 1, |u, _| Some(if u == 0 { [0.0; 3] } else { [0.0, 2.0, 0.0] }));
        assert_eq!(n.get(0, 0), None);
        assert_eq!(n.get(1, 0), Some([0.0, 1.0, 0.0]));
    }
}
