//! Probabilistic benchmarks built from validation residuals: Gaussian,
//! empirical, and conformal (Bonferroni-corrected) prediction intervals
//! around an existing point forecast.
//!
//! All three calibrate per horizon step on absolute residuals
//! `r[k, h] = |yhat - y|` and produce symmetric intervals reported as a
//! two-level [`QuantileForecast`].

use thiserror::Error;

use crate::forecast::{ForecastError, PointForecast, QuantileForecast};
use crate::metrics::std_normal_quantile;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {need} residuals per step, have {got}")]
    TooFewResiduals { need: usize, got: usize },
    #[error(
        "conformal rank {rank} exceeds the {n} calibration scores of step {step}; \
         collect more calibration data or raise alpha"
    )]
    CalibrationTooSmall { rank: usize, n: usize, step: usize },
    #[error("confidence must lie in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// Absolute residuals organized per horizon step: `per_step[h]` holds one
/// entry per forecast origin.
#[derive(Debug, Clone)]
pub struct ResidualSet<S> {
    per_step: Vec<Vec<S>>,
}

impl<S: Scalar> ResidualSet<S> {
    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    /// Residual count per step (equal across steps by construction).
    pub fn len_per_step(&self) -> usize {
        self.per_step.first().map_or(0, Vec::len)
    }

    pub fn step(&self, h: usize) -> &[S] {
        &self.per_step[h]
    }
}

/// Elementwise `|yhat - y|` over a validation forecast. `y_true` is
/// flattened `(origin, step)`, matching [`PointForecast`] layout.
pub fn residuals<S: Scalar>(
    pf: &PointForecast<S>,
    y_true: &[S],
) -> Result<ResidualSet<S>, BaselineError> {
    let h = pf.horizon();
    let n = pf.origins().len();
    if y_true.len() != n * h {
        return Err(BaselineError::ShapeMismatch(format!(
            "{} truth values for {} origins x {} steps",
            y_true.len(),
            n,
            h
        )));
    }
    let mut per_step = vec![Vec::with_capacity(n); h];
    for i in 0..n {
        let row = pf.row(i);
        for step in 0..h {
            per_step[step].push((row[step] - y_true[i * h + step]).abs());
        }
    }
    Ok(ResidualSet { per_step })
}

fn symmetric_forecast<S: Scalar>(
    pf: &PointForecast<S>,
    half_widths: &[S],
    lo_level: f64,
    hi_level: f64,
) -> Result<QuantileForecast<S>, BaselineError> {
    let h = pf.horizon();
    let mut values = Vec::with_capacity(pf.origins().len() * h * 2);
    for i in 0..pf.origins().len() {
        let row = pf.row(i);
        for step in 0..h {
            values.push(row[step] - half_widths[step]);
            values.push(row[step] + half_widths[step]);
        }
    }
    Ok(QuantileForecast::new(
        pf.origins().to_vec(),
        pf.origin_timestamps().to_vec(),
        h,
        vec![lo_level, hi_level],
        values,
        None,
    )?)
}

fn check_confidence(gamma: f64) -> Result<(), BaselineError> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(BaselineError::BadConfidence(gamma));
    }
    Ok(())
}

/// Gaussian interval `yhat +/- z_{(1+gamma)/2} * sigma_h` with
/// `sigma_h = sqrt(mean(r^2))`, the symmetric-residual dispersion estimate.
/// Levels are `((1-gamma)/2, (1+gamma)/2)`.
pub fn gaussian_pi<S: Scalar>(
    pf: &PointForecast<S>,
    rs: &ResidualSet<S>,
    gamma: f64,
) -> Result<QuantileForecast<S>, BaselineError> {
    check_confidence(gamma)?;
    ensure_compatible(pf, rs, 2)?;
    let z = S::cast_from(std_normal_quantile((1.0 + gamma) / 2.0));
    let half_widths: Vec<S> = (0..rs.horizon())
        .map(|h| {
            let r = rs.step(h);
            let mean_sq = r.iter().map(|&v| v * v).sum::<S>() / S::cast_from(r.len() as f64);
            z * mean_sq.sqrt()
        })
        .collect();
    symmetric_forecast(pf, &half_widths, (1.0 - gamma) / 2.0, (1.0 + gamma) / 2.0)
}

/// Nearest-rank empirical quantile: the `ceil(n * gamma)`-th smallest value
/// (1-based), clamped to the data range.
fn nearest_rank<S: Scalar>(sorted: &[S], gamma: f64) -> S {
    let n = sorted.len();
    let rank = ((n as f64 * gamma).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Empirical interval `yhat +/- w_h` where `w_h` is the nearest-rank
/// gamma-quantile of step-h absolute residuals.
pub fn empirical_pi<S: Scalar>(
    pf: &PointForecast<S>,
    rs: &ResidualSet<S>,
    gamma: f64,
) -> Result<QuantileForecast<S>, BaselineError> {
    check_confidence(gamma)?;
    ensure_compatible(pf, rs, 2)?;
    let half_widths: Vec<S> = (0..rs.horizon())
        .map(|h| {
            let mut r = rs.step(h).to_vec();
            r.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
            nearest_rank(&r, gamma)
        })
        .collect();
    symmetric_forecast(pf, &half_widths, (1.0 - gamma) / 2.0, (1.0 + gamma) / 2.0)
}

/// Split-conformal interval with Bonferroni correction across the horizon:
/// per step, the critical score is the `ceil((n+1) * (1 - alpha/H))`-th
/// smallest calibration residual. Joint miscoverage over all H steps is at
/// most alpha for exchangeable data. Levels are `(alpha/2, 1 - alpha/2)`.
pub fn conformal_pi<S: Scalar>(
    pf: &PointForecast<S>,
    rs: &ResidualSet<S>,
    alpha: f64,
) -> Result<QuantileForecast<S>, BaselineError> {
    check_confidence(alpha)?;
    ensure_compatible(pf, rs, 1)?;
    let h_total = rs.horizon() as f64;
    let mut half_widths = Vec::with_capacity(rs.horizon());
    for step in 0..rs.horizon() {
        let mut r = rs.step(step).to_vec();
        r.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
        let n = r.len();
        let rank = ((n as f64 + 1.0) * (1.0 - alpha / h_total)).ceil() as usize;
        if rank > n {
            return Err(BaselineError::CalibrationTooSmall { rank, n, step });
        }
        half_widths.push(r[rank - 1]);
    }
    symmetric_forecast(pf, &half_widths, alpha / 2.0, 1.0 - alpha / 2.0)
}

fn ensure_compatible<S: Scalar>(
    pf: &PointForecast<S>,
    rs: &ResidualSet<S>,
    min_n: usize,
) -> Result<(), BaselineError> {
    if rs.horizon() != pf.horizon() {
        return Err(BaselineError::ShapeMismatch(format!(
            "residuals cover {} steps, forecast has {}",
            rs.horizon(),
            pf.horizon()
        )));
    }
    let got = rs.len_per_step();
    if got < min_n {
        return Err(BaselineError::TooFewResiduals { need: min_n, got });
    }
    Ok(())
}
