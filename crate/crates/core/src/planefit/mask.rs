use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{local_normals, Trapezoid};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, NormalField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadMaskConfig {
    /// Angular tolerance in degrees.
    pub theta_tol: f64,
    /// Gaussian center, normalized image coordinates.
    pub center_x: f64,
    pub center_y: f64,
    /// Gaussian spreads as fractions of image width / height.
    pub sigma_w: f64,
    pub sigma_h: f64,
    /// Pixel offset for the normal finite differences.
    pub normal_offset: usize,
    pub trapezoid: Trapezoid,
    /// Threshold at the median of the nonzero in-ROI values.
    pub binarize: bool,
}

impl Default for RoadMaskConfig {
    fn default() -> Self {
        Self {
            theta_tol: 5.0,
            center_x: 0.5,
            center_y: 0.75,
            sigma_w: 0.25,
            sigma_h: 0.2,
            normal_offset: 2,
            trapezoid: Trapezoid::default(),
            binarize: false,
        }
    }
}

impl RoadMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_tol > 0.0 && self.theta_tol < 90.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_tol must lie in (0, 90) degrees, got {}",
                self.theta_tol
            )));
        }
        if !(self.sigma_w > 0.0 && self.sigma_h > 0.0) {
            return Err(Error::InvalidParameter("Gaussian sigmas must be positive".into()));
        }
        if self.normal_offset < 1 {
            return Err(Error::InvalidParameter("normal offset must be at least 1 pixel".into()));
        }
        if !(self.center_x.is_finite() && self.center_y.is_finite()) {
            return Err(Error::InvalidParameter("Gaussian center must be finite".into()));
        }
        self.trapezoid.validate()
    }
}

/// Per-pixel angle (radians) between the local normal and `n_pred`.
pub fn angular_deviation(normals: &NormalField, n_pred: &Vector3<f64>) -> ScalarField {
    let norm = n_pred.norm();
    let (w, h) = normals.dims();
    ScalarField::from_fn(w, h, FieldRole::Angle, |u, v| {
        let n = Vector3::from(normals.get(u, v)?);
        if !(norm > 0.0) {
            return None;
        }
        Some((n.dot(n_pred) / (n.norm() * norm)).clamp(-1.0, 1.0).acos())
    })
}

/// Soft ramp `clamp(cos θ / cos θ_tol, 0, 1)`.
pub fn road_probability(theta: &ScalarField, cfg: &RoadMaskConfig) -> ScalarField {
    let c = cfg.theta_tol.to_radians().cos();
    let (w, h) = theta.dims();
    ScalarField::from_fn(w, h, FieldRole::Mask, |u, v| {
        theta.get(u, v).map(|t| (t.cos() / c).clamp(0.0, 1.0))
    })
}

fn gaussian_raw(x: f64, y: f64, w: usize, h: usize, cfg: &RoadMaskConfig) -> f64 {
    // normalized coordinates map to pixel positions the same way as the ROI
    let cx = cfg.center_x * w as f64 - 0.5;
    let cy = cfg.center_y * h as f64 - 0.5;
    let sw = cfg.sigma_w * w as f64;
    let sh = cfg.sigma_h * h as f64;
    (-(x - cx).powi(2) / (2.0 * sw * sw) - (y - cy).powi(2) / (2.0 * sh * sh)).exp()
}

/// Bottom-centered Gaussian prior, scaled so its maximum over the grid is 1.
pub fn gaussian_prior(w: usize, h: usize, cfg: &RoadMaskConfig) -> Result<ScalarField> {
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput);
    }
    let raw: Vec<f64> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| gaussian_raw(u as f64, v as f64, w, h, cfg))
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::InvalidParameter("Gaussian prior underflows on this grid".into()));
    }
    Ok(ScalarField::from_fn(w, h, FieldRole::Mask, |u, v| Some(raw[v * w + u] / max)))
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Road probability times the Gaussian prior, zero outside the trapezoid.
///
/// Pixels without a local normal get 0, as does every pixel when the depth
/// map has no valid samples.
pub fn road_mask(
    depth: &ScalarField,
    k: &CameraIntrinsics,
    n_pred: &Vector3<f64>,
    cfg: &RoadMaskConfig,
) -> Result<ScalarField> {
    cfg.validate()?;
    depth.expect_role(FieldRole::Depth)?;
    let (w, h) = depth.dims();
    let normals = match local_normals(depth, k, cfg.normal_offset) {
        Ok(n) => n,
        Err(Error::EmptyInput) => return ScalarField::filled(w, h, FieldRole::Mask, 0.0),
        Err(e) => return Err(e),
    };
    let prob = road_probability(&angular_deviation(&normals, n_pred), cfg);
    let prior = gaussian_prior(w, h, cfg)?;
    let roi = cfg.trapezoid.mask(w, h);
    let mut values: Vec<f64> = (0..w * h)
        .map(|i| {
            let (u, v) = (i % w, i / w);
            match (roi[i], prob.get(u, v), prior.get(u, v)) {
                (true, Some(p), Some(g)) => p * g,
                _ => 0.0,
            }
        })
        .collect();
    if cfg.binarize {
        let nonzero: Vec<f64> = values
            .iter()
            .zip(&roi)
            .filter(|(&m, &r)| r && m > 0.0)
            .map(|(&m, _)| m)
            .collect();
        if let Some(t) = median(nonzero) {
            for m in &mut values {
                *m = if *m >= t && *m > 0.0 { 1.0 } else { 0.0 };
            }
        }
    }
    ScalarField::new(w, h, FieldRole::Mask, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::plane_depth;
    use crate::geometry::PlaneModel;
    use approx::assert_abs_diff_eq;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 80.0, 30.0, 160, 96).unwrap()
    }

    fn up() -> Vector3<f64> {
        Vector3::new(0.0, -1.0, 0.0)
    }

    #[test]
    fn deviation_basics() {
        let same = NormalField::constant(4, 3, [0.0, -1.0, 0.0]);
        let t = angular_deviation(&same, &up());
        assert!(t.iter_valid().all(|(_, _, a)| a == 0.0));
        let t = angular_deviation(&same, &Vector3::z());
        assert!(t.iter_valid().all(|(_, _, a)| (a - std::f64::consts::FRAC_PI_2).abs() < 1e-12));
    }

    #[test]
    fn deviation_clamps_dot() {
        let n = NormalField::constant(1, 1, [0.0, -1.0, 0.0]);
        let t = angular_deviation(&n, &Vector3::new(0.0, -1.0 - 1e-9, 0.0).normalize());
        assert_eq!(t.get(0, 0), Some(0.0));
        let t = angular_deviation(&n, &Vector3::new(0.0, -1.0, 1e-9));
        assert!(t.get(0, 0).unwrap().is_finite());
    }

    #[test]
    fn ramp_values() {
        let cfg = RoadMaskConfig::default();
        let theta = ScalarField::new(
            3,
            1,
            FieldRole::Angle,
            vec![0.0, 90f64.to_radians(), 60f64.to_radians()],
        )
        .unwrap();
        let p = road_probability(&theta, &cfg);
        assert_eq!(p.get(0, 0), Some(1.0));
        assert_abs_diff_eq!(p.get(1, 0).unwrap(), 0.0, epsilon = 1e-12);
        let expected = 0.5 / 5f64.to_radians().cos();
        assert_abs_diff_eq!(p.get(2, 0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(p.get(2, 0).unwrap(), 0.50191, epsilon = 1e-5);
    }

    #[test]
    fn prior_shape() {
        // even center coordinates so the peak lands on a pixel
        let cfg = RoadMaskConfig { center_x: 50.5 / 101.0, center_y: 60.5 / 81.0, ..Default::default() };
        let g = gaussian_prior(101, 81, &cfg).unwrap();
        assert_eq!(g.max(), Some(1.0));
        assert_abs_diff_eq!(g.get(50, 60).unwrap(), 1.0, epsilon = 1e-12);
        let sw = cfg.sigma_w * 101.0;
        let x = 50.0 + sw;
        let rel = gaussian_raw(x, 60.0, 101, 81, &cfg) / gaussian_raw(50.0, 60.0, 101, 81, &cfg);
        assert_abs_diff_eq!(rel, (-0.5f64).exp(), epsilon = 1e-12);
        for d in 1..40 {
            assert_eq!(g.get(50 + d, 20), g.get(50 - d, 20));
        }
    }

    #[test]
    fn default_prior_peaks_in_lower_quarter() {
        let g = gaussian_prior(160, 96, &RoadMaskConfig::default()).unwrap();
        assert_eq!(g.max(), Some(1.0));
        let (u, v, _) = g.iter_valid().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
        assert!((79..=80).contains(&u));
        assert!((71..=72).contains(&v));
    }

    fn road_and_wall() -> ScalarField {
        // level road 1.5 m below, wall at 8 m over the upper rows
        let k = cam();
        let plane = PlaneModel::level(1.5).unwrap();
        ScalarField::from_fn(160, 96, FieldRole::Depth, |u, v| {
            let road = plane_depth(&plane, &k, u as f64, v as f64).filter(|&d| d < 8.0);
            Some(road.unwrap_or(8.0))
        })
    }

    #[test]
    fn flat_road_mask() {
        let depth = road_and_wall();
        let k = cam();
        let m = road_mask(&depth, &k, &up(), &RoadMaskConfig::default()).unwrap();
        let bottom: Vec<f64> = (80..96)
            .flat_map(|v| (60..100).map(move |u| (u, v)))
            .map(|(u, v)| m.get(u, v).unwrap())
            .collect();
        let mean = bottom.iter().sum::<f64>() / bottom.len() as f64;
        assert!(mean > 0.5, "{mean}");
        // wall rows: road depth there would exceed 8 m
        for v in 45..65 {
            for u in 70..90 {
                let on_wall = plane_depth(&PlaneModel::level(1.5).unwrap(), &k, u as f64, v as f64)
                    .is_none_or(|d| d > 8.5);
                if on_wall && v > 46 {
                    assert!(m.get(u, v).unwrap() < 1e-6, "{u} {v}");
                }
            }
        }
        assert!(m.iter_valid().all(|(_, _, x)| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn orthogonal_prediction_zeroes_road() {
        let m = road_mask(&road_and_wall(), &cam(), &Vector3::x(), &RoadMaskConfig::default()).unwrap();
        assert!(m.iter_valid().all(|(_, _, x)| x < 1e-9));
    }

    #[test]
    fn invalid_depth_gives_zero_mask() {
        let depth = ScalarField::invalid(160, 96, FieldRole::Depth);
        let m = road_mask(&depth, &cam(), &up(), &RoadMaskConfig::default()).unwrap();
        assert_eq!(m.valid_count(), 160 * 96);
        assert!(m.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn binarized_mask_is_binary() {
        let cfg = RoadMaskConfig { binarize: true, ..Default::default() };
        let m = road_mask(&road_and_wall(), &cam(), &up(), &cfg).unwrap();
        assert!(m.data().iter().all(|&x| x == 0.0 || x == 1.0));
        assert!(m.data().iter().any(|&x| x == 1.0));
    }
}
