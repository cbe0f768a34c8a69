use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform taking target-frame points into the source frame:
/// `P_s = R · P_t + t`.
///
/// Serialized as `rotation` (three rows) and `translation`; deserialization
/// validates the rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct RelativePose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RelativePose {
    /// Fails unless `rotation` is orthonormal with determinant +1 (within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(err <= ORTHO_TOL) || !((det - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::InvalidParameter(format!(
                "rotation is not orthonormal (‖RᵀR − I‖∞ = {err:e}, det = {det})"
            )));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `t`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12)
            .ok_or_else(|| Error::InvalidParameter("rotation axis is zero".into()))?;
        Ok(Self {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation: t,
        })
    }

    /// Pose of a source camera whose center sits at `center` (target frame),
    /// rotated by `rotation` relative to the target camera.
    pub fn from_source_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        Self::new(rotation, -(rotation * center))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Source camera center expressed in the target frame, `−Rᵀ t`.
    pub fn source_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for RelativePose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = r.rotation;
        Self::new(Matrix3::from_fn(|i, j| m[i][j]), Vector3::from(r.translation))
    }
}

impl From<RelativePose> for PoseRepr {
    fn from(p: RelativePose) -> Self {
        let r = p.rotation;
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

/// Road plane seen from the camera: upward unit normal and camera height.
///
/// A point `P` (camera frame) has height `normal · P + camera_height` above
/// the plane; the plane itself is `normal · P = −camera_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlaneRepr", into = "PlaneRepr")]
pub struct PlaneModel {
    normal: Vector3<f64>,
    camera_height: f64,
}

impl PlaneModel {
    /// Normalizes `normal`; fails on a zero normal or non-positive height.
    pub fn new(normal: Vector3<f64>, camera_height: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::InvalidParameter("plane normal must be non-zero".into()));
        }
        if !(camera_height > 0.0) || !camera_height.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "camera height must be positive, got {camera_height}"
            )));
        }
        Ok(Self {
            normal: normal / norm,
            camera_height,
        })
    }

    /// Flat road under a level camera: normal `[0, −1, 0]`.
    pub fn level(camera_height: f64) -> Result<Self> {
        Self::new(Vector3::new(0.0, -1.0, 0.0), camera_height)
    }

    /// Upward normal.
    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    /// Normal pointing from the camera toward the plane (`−normal`).
    pub fn downward(&self) -> Vector3<f64> {
        -self.normal
    }

    pub fn camera_height(&self) -> f64 {
        self.camera_height
    }

    /// Signed height of `p` above the plane.
    #[inline]
    pub fn height_of(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.camera_height
    }

    pub fn with_camera_height(&self, camera_height: f64) -> Result<Self> {
        Self::new(self.normal, camera_height)
    }

    /// Plane with the normal rotated by `angle` radians about `axis`.
    pub fn tilted(&self, axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12)
            .ok_or_else(|| Error::InvalidParameter("tilt axis is zero".into()))?;
        Self::new(Rotation3::from_axis_angle(&axis, angle) * self.normal, self.camera_height)
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneRepr {
    normal: [f64; 3],
    camera_height: f64,
}

impl TryFrom<PlaneRepr> for PlaneModel {
    type Error = Error;

    fn try_from(r: PlaneRepr) -> Result<Self> {
        Self::new(Vector3::from(r.normal), r.camera_height)
    }
}

impl From<PlaneModel> for PlaneRepr {
    fn from(p: PlaneModel) -> Self {
        Self {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            camera_height: p.camera_height,
        }
    }
}
