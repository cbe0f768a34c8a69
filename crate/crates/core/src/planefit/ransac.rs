//! RANSAC ground-plane extraction from a depth map.
//!
//! 1. Pre-filter: valid depth, within `max_range`, inside the trapezoid ROI.
//! 2. Hypothesis: plane through three sampled non-collinear points.
//! 3. Score: a point is an inlier if `|n·P + d| < τ`; the hypothesis with most
//!    inliers wins, ties going to the earliest iteration.
//! 4. Orientation: flip `(n, d)` so that `n·n_ref ≥ 0`.
//!
//! Optionally the winner is refined by a least-squares fit over its inliers,
//! kept only if it does not lose inliers.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Trapezoid;
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, ScalarField};
use crate::geometry::PlaneModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier distance τ (meters).
    pub inlier_threshold: f64,
    pub seed: u64,
    pub roi: Trapezoid,
    /// Points deeper than this are ignored (meters).
    pub max_range: f64,
    /// Least-squares refit of the winning hypothesis over its inliers.
    pub refine: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            inlier_threshold: 0.01,
            seed: 0,
            roi: Trapezoid::default(),
            max_range: 80.0,
            refine: true,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("RANSAC needs at least one iteration".into()));
        }
        if !(self.inlier_threshold > 0.0) || !(self.max_range > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inlier threshold and max range must be positive ({}, {})",
                self.inlier_threshold, self.max_range
            )));
        }
        self.roi.validate()
    }
}

/// Plane `normal · P + offset = 0` with `normal` oriented along the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
}

impl FittedPlane {
    pub fn normal_vector(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }

    /// Signed height of `p` above the plane.
    pub fn height_of(&self, p: &Vector3<f64>) -> f64 {
        self.normal_vector().dot(p) + self.offset
    }

    /// Camera-relative plane model; the offset becomes the camera height.
    pub fn to_plane_model(&self) -> Result<PlaneModel> {
        if !(self.offset > 1e-9) {
            return Err(Error::DegeneratePlane);
        }
        PlaneModel::new(self.normal_vector(), self.offset)
    }

    /// γ = (n·P + offset) / D for every valid depth pixel.
    pub fn gamma_field(&self, depth: &ScalarField, k: &CameraIntrinsics) -> Result<ScalarField> {
        depth.expect_role(FieldRole::Depth)?;
        Ok(ScalarField::from_fn(
            depth.width(),
            depth.height(),
            FieldRole::Gamma,
            |u, v| {
                let d = depth.get(u, v)?;
                Some(self.height_of(&(k.ray(u as f64, v as f64) * d)) / d)
            },
        ))
    }
}

/// Structure-of-arrays point set used for scoring.
struct Points {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Points {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn get(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.x[i], self.y[i], self.z[i])
    }
}

fn candidate_points(depth: &ScalarField, k: &CameraIntrinsics, cfg: &RansacConfig) -> Points {
    let (w, h) = depth.dims();
    let mut pts = Points {
        x: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
    };
    for (u, v, d) in depth.iter_valid() {
        if d > cfg.max_range || !cfg.roi.contains(u, v, w, h) {
            continue;
        }
        let p = k.ray(u as f64, v as f64) * d;
        pts.x.push(p.x);
        pts.y.push(p.y);
        pts.z.push(p.z);
    }
    pts
}

#[inline]
fn count_chunk(x: &[f64], y: &[f64], z: &[f64], n: &Vector3<f64>, d: f64, tau: f64) -> usize {
    let (a, b, c) = (n.x, n.y, n.z);
    x.iter()
        .zip(y)
        .zip(z)
        .map(|((&x, &y), &z)| ((a * x + b * y + c * z + d).abs() < tau) as usize)
        .sum()
}

/// Number of points with `|n·P + d| < tau`, or `None` once the count can no
/// longer exceed `beat`.
fn score(points: &Points, n: &Vector3<f64>, d: f64, tau: f64, beat: usize) -> Option<usize> {
    const CHUNK: usize = 4096;
    let total = points.len();
    let mut count = 0;
    let mut seen = 0;
    for ((x, y), z) in points
        .x
        .chunks(CHUNK)
        .zip(points.y.chunks(CHUNK))
        .zip(points.z.chunks(CHUNK))
    {
        count += count_chunk(x, y, z, n, d, tau);
        seen += x.len();
        if count + (total - seen) <= beat && beat > 0 {
            return None;
        }
    }
    Some(count)
}

/// Inliers of plane `(normal, offset)` among the valid depth pixels inside the
/// configured ROI and range.
pub fn count_inliers(
    depth: &ScalarField,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    normal: &Vector3<f64>,
    offset: f64,
) -> usize {
    let pts = candidate_points(depth, k, cfg);
    count_chunk(&pts.x, &pts.y, &pts.z, normal, offset, cfg.inlier_threshold)
}

fn hypothesis(p1: Vector3<f64>, p2: Vector3<f64>, p3: Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let a = p2 - p1;
    let b = p3 - p1;
    let n = a.cross(&b);
    let norm = n.norm();
    if !(norm > 1e-9 * a.norm() * b.norm()) || norm == 0.0 {
        return None;
    }
    let n = n / norm;
    Some((n, -n.dot(&p1)))
}

fn least_squares(points: &Points, n: &Vector3<f64>, d: f64, tau: f64) -> Option<(Vector3<f64>, f64)> {
    let mut sum = Vector3::zeros();
    let mut count = 0usize;
    let inlier = |i: usize| (n.dot(&points.get(i)) + d).abs() < tau;
    for i in (0..points.len()).filter(|&i| inlier(i)) {
        sum += points.get(i);
        count += 1;
    }
    if count < 3 {
        return None;
    }
    let centroid = sum / count as f64;
    let mut cov = Matrix3::zeros();
    for i in (0..points.len()).filter(|&i| inlier(i)) {
        let q = points.get(i) - centroid;
        cov += q * q.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut normal: Vector3<f64> = eig.eigenvectors.column(imin).into_owned();
    normal.normalize_mut();
    if normal.dot(n) < 0.0 {
        normal = -normal;
    }
    Some((normal, -normal.dot(&centroid)))
}

/// Fits the dominant plane of a depth map.
pub fn ransac_plane(
    depth: &ScalarField,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    n_ref: &Vector3<f64>,
) -> Result<FittedPlane> {
    depth.expect_role(FieldRole::Depth)?;
    cfg.validate()?;
    let pts = candidate_points(depth, k, cfg);
    let total = pts.len();
    if total < 3 {
        return Err(Error::InsufficientPoints(total));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tau = cfg.inlier_threshold;
    let mut best: Option<(Vector3<f64>, f64, usize)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..total);
        let j = rng.random_range(0..total);
        let l = rng.random_range(0..total);
        if i == j || j == l || i == l {
            continue;
        }
        let Some((n, d)) = hypothesis(pts.get(i), pts.get(j), pts.get(l)) else {
            continue;
        };
        let beat = best.map_or(0, |b| b.2);
        if let Some(count) = score(&pts, &n, d, tau, beat) {
            if best.is_none() || count > beat {
                best = Some((n, d, count));
            }
        }
    }
    let (mut n, mut d, mut count) = best.ok_or(Error::DegenerateGeometry)?;

    if cfg.refine {
        if let Some((rn, rd)) = least_squares(&pts, &n, d, tau) {
            let rc = count_chunk(&pts.x, &pts.y, &pts.z, &rn, rd, tau);
            if rc >= count {
                (n, d, count) = (rn, rd, rc);
            }
        }
    }
    if n.dot(n_ref) < 0.0 {
        n = -n;
        d = -d;
    }
    Ok(FittedPlane {
        normal: [n.x, n.y, n.z],
        offset: d,
        inlier_count: count,
        inlier_ratio: count as f64 / total as f64,
    })
}

/// RANSAC plane fit followed by per-pixel γ against the fitted plane.
pub fn gamma_from_depth_ransac(
    depth: &ScalarField,
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
    n_ref: &Vector3<f64>,
) -> Result<(ScalarField, FittedPlane)> {
    let plane = ransac_plane(depth, k, cfg, n_ref)?;
    Ok((plane.gamma_field(depth, k)?, plane))
}
