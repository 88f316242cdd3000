//! Risk estimates and classical selection criteria.
//!
//! GSURE and its projected variant estimate `‖x̂ − x‖²` (resp.
//! `‖P(x̂ − x)‖²`) up to an additive constant that does not depend on the
//! estimate, so only differences between candidates are meaningful.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::DegradationOperator;

/// Every criterion evaluated for one `(λ, K)` candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub lambda: f64,
    pub k: usize,
    pub gsure: f64,
    pub projected_gsure: f64,
    /// Present only when the GCV probe run was tracked.
    pub gcv: Option<f64>,
    /// `log ‖H x̂ − y‖²`.
    pub lcurve_x: f64,
    /// `log ‖x̂‖²`.
    pub lcurve_y: f64,
    pub discrepancy: f64,
    pub residual_norm_sq: f64,
    pub true_mse: Option<f64>,
    /// ISNR for deblurring, PSNR for scale-up.
    pub quality_db: Option<f64>,
}

/// `‖x̂‖² − 2⟨x_ML, x̂⟩ + 2·div`.
pub fn gsure(estimate: &Image, divergence: f64, x_ml: &Image) -> Result<f64> {
    x_ml.ensure_dims(estimate.dims())?;
    Ok(estimate.norm_sq() - 2.0 * x_ml.dot(estimate) + 2.0 * divergence)
}

/// `‖P x̂‖² − 2⟨x_ML, x̂⟩ + 2·div_P`, where `div_P` is the divergence of
/// `P x̂`.
pub fn projected_gsure(
    estimate: &Image,
    projected_divergence: f64,
    x_ml: &Image,
    op: &DegradationOperator,
) -> Result<f64> {
    x_ml.ensure_dims(estimate.dims())?;
    let projected = op.project_range_ht(estimate)?;
    Ok(projected_gsure_from_parts(&projected, estimate, projected_divergence, x_ml))
}

pub(crate) fn projected_gsure_from_parts(
    projected: &Image,
    estimate: &Image,
    projected_divergence: f64,
    x_ml: &Image,
) -> f64 {
    projected.norm_sq() - 2.0 * x_ml.dot(estimate) + 2.0 * projected_divergence
}

/// `(‖r‖²/n_y) / (1 − trace_probe/n_y)²`.
pub fn gcv(residual_norm_sq: f64, trace_probe: f64, n_y: usize) -> Result<f64> {
    let n = n_y as f64;
    let denom = 1.0 - trace_probe / n;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateGcv(denom));
    }
    Ok(residual_norm_sq / n / (denom * denom))
}

/// `|‖H x̂ − y‖² − n_y σ²|`.
pub fn discrepancy(residual_norm_sq: f64, n_y: usize, sigma2: f64) -> f64 {
    (residual_norm_sq - n_y as f64 * sigma2).abs()
}

/// First index whose squared residual drops below `n_y σ²`.
pub fn first_crossing(residual_history: &[f64], n_y: usize, sigma2: f64) -> Option<usize> {
    let level = n_y as f64 * sigma2;
    residual_history.iter().position(|&r| r < level)
}

/// One L-curve sample: parameter value and its `(X, Y)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcurvePoint {
    pub param: f64,
    pub x: f64,
    pub y: f64,
}

pub const LCURVE_MIN_SAMPLES: usize = 7;
const LCURVE_WINDOW: usize = 2;

/// Value at index `i` of the least-squares line through the window
/// `i ± 2` (truncated at the ends).
fn smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(LCURVE_WINDOW);
            let hi = (i + LCURVE_WINDOW).min(n - 1);
            let m = (hi - lo + 1) as f64;
            let t_mean = (lo..=hi).map(|t| t as f64).sum::<f64>() / m;
            let v_mean = values[lo..=hi].iter().sum::<f64>() / m;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            for t in lo..=hi {
                let dt = t as f64 - t_mean;
                sxy += dt * (values[t] - v_mean);
                sxx += dt * dt;
            }
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            v_mean + slope * (i as f64 - t_mean)
        })
        .collect()
}

/// First and second derivatives at the knots of the not-a-knot cubic
/// spline through `values` at unit-spaced parameters (needs 4+ values).
fn spline_derivatives(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    debug_assert!(n >= 4);
    // Interior rows: M_{i-1} + 4 M_i + M_{i+1} = 6 (v_{i+1} − 2 v_i + v_{i-1}).
    // Not-a-knot ends give M_0 = 2 M_1 − M_2, which turns row 1 into
    // 6 M_1 = rhs_1 (and symmetrically at the far end).
    let rhs = |i: usize| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]);
    let mut second = vec![0.0; n];
    second[1] = rhs(1) / 6.0;
    second[n - 2] = rhs(n - 2) / 6.0;
    if n > 4 {
        // Thomas sweep over rows 2..=n-3 with M_1, M_{n-2} known.
        let rows: Vec<usize> = (2..=n - 3).collect();
        let mut diag = vec![4.0; rows.len()];
        let mut r: Vec<f64> = rows.iter().map(|&i| rhs(i)).collect();
        r[0] -= second[1];
        let last = rows.len() - 1;
        r[last] -= second[n - 2];
        for i in 1..rows.len() {
            let factor = 1.0 / diag[i - 1];
            diag[i] -= factor;
            r[i] -= factor * r[i - 1];
        }
        second[rows[last]] = r[last] / diag[last];
        for i in (0..last).rev() {
            second[rows[i]] = (r[i] - second[rows[i] + 1]) / diag[i];
        }
    }
    second[0] = 2.0 * second[1] - second[2];
    second[n - 1] = 2.0 * second[n - 2] - second[n - 3];
    let mut first = vec![0.0; n];
    for i in 0..n - 1 {
        first[i] = values[i + 1] - values[i] - (2.0 * second[i] + second[i + 1]) / 6.0;
    }
    first[n - 1] = values[n - 1] - values[n - 2] + (second[n - 2] + 2.0 * second[n - 1]) / 6.0;
    (first, second)
}

fn validate_lcurve(samples: &[LcurvePoint]) -> Result<()> {
    if samples.len() < LCURVE_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "L-curve needs at least {LCURVE_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.windows(2).any(|w| !(w[1].param > w[0].param)) {
        return Err(Error::InvalidArgument(
            "L-curve parameters must be strictly increasing".into(),
        ));
    }
    if samples.iter().any(|s| !(s.x.is_finite() && s.y.is_finite())) {
        return Err(Error::NonFinite("L-curve coordinate".into()));
    }
    Ok(())
}

/// Signed curvature at every sample after 5-point line smoothing and a
/// not-a-knot cubic spline in the sample index. The orientation makes the
/// corner of an L traversed with increasing parameter positive.
pub fn lcurve_curvature(samples: &[LcurvePoint]) -> Result<Vec<f64>> {
    validate_lcurve(samples)?;
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let (dx, ddx) = spline_derivatives(&smooth(&xs));
    let (dy, ddy) = spline_derivatives(&smooth(&ys));
    Ok((0..samples.len())
        .map(|i| {
            let speed = (dx[i] * dx[i] + dy[i] * dy[i]).powf(1.5);
            if speed == 0.0 {
                0.0
            } else {
                (dx[i] * ddy[i] - ddx[i] * dy[i]) / speed
            }
        })
        .collect())
}

/// Index and parameter of the maximum-curvature sample. Near-ties go to
/// the first index.
pub fn lcurve_select(samples: &[LcurvePoint]) -> Result<(usize, f64)> {
    let kappa = lcurve_curvature(samples)?;
    let max = kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs().max(1.0);
    let idx = kappa
        .iter()
        .position(|&k| k >= max - tol)
        .expect("nonempty");
    Ok((idx, samples[idx].param))
}
