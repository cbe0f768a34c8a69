//! Depth and γ evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldRole, ScalarField};

pub const MIN_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub depth_cap: f64,
    /// Optional tighter range cap (e.g. 20, 40, 60 m).
    pub near_cap: Option<f64>,
    pub median_scale: bool,
    /// Absolute escape tolerance for the γ accuracy thresholds.
    pub gamma_abs_tol: f64,
    /// Shift applied inside the logarithm of the γ log-RMSE.
    pub log_offset: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            depth_cap: 80.0,
            near_cap: None,
            median_scale: false,
            gamma_abs_tol: 0.01,
            log_offset: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let cap_ok = self.depth_cap > MIN_DEPTH && self.near_cap.is_none_or(|c| c > MIN_DEPTH);
        if !cap_ok || !(self.gamma_abs_tol > 0.0) || !self.log_offset.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid evaluation config {self:?}")));
        }
        Ok(())
    }

    /// The range cap actually applied.
    pub fn effective_cap(&self) -> f64 {
        self.near_cap.map_or(self.depth_cap, |c| c.min(self.depth_cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Pixels that entered the evaluation.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMetrics {
    pub abs_diff: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub count: usize,
    /// Offset the log-RMSE was computed with.
    pub log_offset: f64,
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Scales `pred` by `median(gt) / median(pred)` over pixels valid in both.
pub fn median_scale(pred: &ScalarField, gt: &ScalarField) -> Result<(ScalarField, f64)> {
    pred.expect_same_shape(gt.dims())?;
    let (p, g): (Vec<f64>, Vec<f64>) = pred
        .iter_valid()
        .filter_map(|(u, v, x)| Some((x, gt.get(u, v)?)))
        .unzip();
    let ratio = median_ratio(&p, &g)?;
    let (w, h) = pred.dims();
    let scaled = ScalarField::from_fn(w, h, pred.role(), |u, v| pred.get(u, v).map(|x| x * ratio));
    Ok((scaled, ratio))
}

fn median_ratio(pred: &[f64], gt: &[f64]) -> Result<f64> {
    let mp = median(pred).ok_or(Error::EmptyEvaluation)?;
    let mg = median(gt).ok_or(Error::EmptyEvaluation)?;
    if !(mp > 0.0) {
        return Err(Error::DegenerateScale(mp));
    }
    Ok(mg / mp)
}

/// `(pred, gt)` pairs that enter a depth evaluation, in row-major order.
fn depth_pairs(pred: &ScalarField, gt: &ScalarField, cap: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    pred.expect_role(FieldRole::Depth)?;
    gt.expect_role(FieldRole::Depth)?;
    pred.expect_same_shape(gt.dims())?;
    Ok(gt
        .iter_valid()
        .filter(|&(_, _, g)| g > MIN_DEPTH && g <= cap)
        .filter_map(|(u, v, g)| Some((pred.get(u, v)?, g)))
        .unzip())
}

pub fn depth_metrics(pred: &ScalarField, gt: &ScalarField, cfg: &EvalConfig) -> Result<DepthMetrics> {
    cfg.validate()?;
    let cap = cfg.effective_cap();
    let (mut p, g) = depth_pairs(pred, gt, cap)?;
    if p.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if cfg.median_scale {
        let r = median_ratio(&p, &g)?;
        p.iter_mut().for_each(|x| *x *= r);
    }
    let n = p.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for (&x, &g) in p.iter().zip(&g) {
        let x = x.clamp(MIN_DEPTH, cap);
        let d = x - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = x.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (x / g).max(g / x);
        for (i, hit) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(i as i32 + 1) {
                *hit += 1;
            }
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: hits[0] as f64 / n,
        delta2: hits[1] as f64 / n,
        delta3: hits[2] as f64 / n,
        count: p.len(),
    })
}

/// γ metrics over pixels valid in both fields.
pub fn gamma_metrics(pred: &ScalarField, gt: &ScalarField, cfg: &EvalConfig) -> Result<GammaMetrics> {
    gamma_metrics_impl(pred, gt, None, cfg)
}

/// γ metrics restricted to pixels whose ground-truth depth is valid and
/// within the configured cap.
pub fn gamma_metrics_with_depth(
    pred: &ScalarField,
    gt: &ScalarField,
    gt_depth: &ScalarField,
    cfg: &EvalConfig,
) -> Result<GammaMetrics> {
    gt_depth.expect_role(FieldRole::Depth)?;
    gt.expect_same_shape(gt_depth.dims())?;
    gamma_metrics_impl(pred, gt, Some(gt_depth), cfg)
}

fn gamma_metrics_impl(
    pred: &ScalarField,
    gt: &ScalarField,
    depth: Option<&ScalarField>,
    cfg: &EvalConfig,
) -> Result<GammaMetrics> {
    cfg.validate()?;
    pred.expect_role(FieldRole::Gamma)?;
    gt.expect_role(FieldRole::Gamma)?;
    pred.expect_same_shape(gt.dims())?;
    let cap = cfg.effective_cap();
    let (mut abs, mut sq, mut sq_log) = (0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    let mut n = 0usize;
    for (u, v, g) in gt.iter_valid() {
        let Some(x) = pred.get(u, v) else { continue };
        if let Some(d) = depth {
            match d.get(u, v) {
                Some(d) if d > MIN_DEPTH && d <= cap => {}
                _ => continue,
            }
        }
        n += 1;
        let diff = x - g;
        abs += diff.abs();
        sq += diff * diff;
        let dl = (x + cfg.log_offset).max(1e-6).ln() - (g + cfg.log_offset).max(1e-6).ln();
        sq_log += dl * dl;
        let ratio = (x > 0.0 && g > 0.0).then(|| (x / g).max(g / x));
        for (i, hit) in hits.iter_mut().enumerate() {
            let by_ratio = ratio.is_some_and(|r| r < 1.25f64.powi(i as i32 + 1));
            if diff.abs() < cfg.gamma_abs_tol || by_ratio {
                *hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let nf = n as f64;
    Ok(GammaMetrics {
        abs_diff: abs / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        count: n,
        log_offset: cfg.log_offset,
    })
}

/// One row per cap; rows whose cap leaves no pixels carry the error.
pub fn range_capped_eval(
    pred: &ScalarField,
    gt: &ScalarField,
    caps: &[f64],
    cfg: &EvalConfig,
) -> Result<Vec<(f64, Result<DepthMetrics>)>> {
    if caps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("range caps must be sorted ascending".into()));
    }
    Ok(caps
        .iter()
        .map(|&c| {
            let row = EvalConfig { near_cap: Some(c), ..*cfg };
            (c, depth_metrics(pred, gt, &row))
        })
        .collect())
}
