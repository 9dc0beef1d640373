//! Prior knowledge for the sampling-width search.
//!
//! When earlier runs on related tasks are available, the distribution of
//! their best sampling widths is summarized by the mean and standard
//! deviation of the natural logarithms and reused as a log-normal prior for
//! new searches. With a single contributing run the spread is undefined, so
//! the caller falls back to the uninformed uniform prior.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HpoError, TrialRecord};

/// Summary of best sampling widths from earlier runs: mean `m` and sample
/// standard deviation `s` of ln σ*, plus the number of contributing records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorStats {
    pub m: f64,
    pub s: f64,
    pub n: usize,
}

impl PriorStats {
    /// True when the statistics cannot support a log-normal prior (a single
    /// contributor leaves the spread undefined, recorded as zero).
    pub fn is_degenerate(&self) -> bool {
        self.n < 2 || self.s <= 0.0
    }

    /// The prior these statistics justify: log-normal when the spread is
    /// informative, otherwise the uniform fallback.
    pub fn to_prior(&self) -> SigmaPrior {
        if self.is_degenerate() {
            SigmaPrior::Uniform
        } else {
            SigmaPrior::LogNormal { m: self.m, s: self.s }
        }
    }
}

/// Sampling distribution used for start-up suggestions and candidate draws.
///
/// `Uniform` draws uniformly in ln σ over the search interval, matching the
/// log-scaled search dimension; `LogNormal` draws `exp(m + s·ξ)` with
/// standard-normal ξ. Draws are clamped into the search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaPrior {
    Uniform,
    LogNormal { m: f64, s: f64 },
}

impl SigmaPrior {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, lo: f64, hi: f64) -> f64 {
        let value = match self {
            SigmaPrior::Uniform => rng.gen_range(lo.ln()..=hi.ln()).exp(),
            SigmaPrior::LogNormal { m, s } => {
                if *s > 0.0 {
                    let normal = Normal::new(*m, *s).expect("finite log-normal parameters");
                    normal.sample(rng).exp()
                } else {
                    m.exp()
                }
            }
        };
        value.clamp(lo, hi)
    }
}

/// Compute [`PriorStats`] from the records of a finished population.
///
/// Only records carrying a best inner sampling width contribute. `s` uses
/// the n−1 denominator and is zero when a single record contributes, which
/// flags the uniform fallback through [`PriorStats::is_degenerate`].
pub fn prior_stats(population: &[TrialRecord]) -> Result<PriorStats, HpoError> {
    let logs: Vec<f64> = population
        .iter()
        .filter_map(|r| r.sigma_star)
        .filter(|s| *s > 0.0 && s.is_finite())
        .map(f64::ln)
        .collect();
    if logs.is_empty() {
        return Err(HpoError::EmptyPopulation);
    }
    let n = logs.len();
    let m = logs.iter().sum::<f64>() / n as f64;
    let s = if n < 2 {
        0.0
    } else {
        (logs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(PriorStats { m, s, n })
}
