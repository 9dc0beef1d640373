//! Tree-of-Parzen-estimators search over the sampling width.
//!
//! The sampler works on the logarithm of the single searched dimension.
//! Start-up suggestions come straight from the prior; once enough
//! observations exist the observations are split into a best fraction γ and
//! the rest, each half is summarized by a Gaussian kernel density estimate
//! in ln σ, and the next suggestion is the candidate (drawn from the prior)
//! that maximizes the density ratio l(σ)/g(σ).
//!
//! Randomness is derived from the stored seed and a draw counter, so a
//! serialized state continues exactly where it left off.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::prior::SigmaPrior;
use super::HpoError;

/// Floor on the kernel bandwidth in ln-space; keeps the density estimates
/// from collapsing into spikes when few or identical points contribute.
const BANDWIDTH_FLOOR: f64 = 1e-2;

const LN_2PI: f64 = 1.8378770664093453;

/// Tuning knobs of the sampler. The defaults are the values used throughout
/// the pipelines; tests override them to pin down documented behaviours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Fraction of observations forming the "good" density l.
    pub gamma: f64,
    /// Number of prior-drawn candidates scored per suggestion.
    pub n_candidates: usize,
    /// Number of initial suggestions drawn directly from the prior.
    pub n_startup: usize,
    /// Fixed kernel bandwidth in ln-space; `None` applies Silverman's rule.
    pub bandwidth: Option<f64>,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.25,
            n_candidates: 64,
            n_startup: 5,
            bandwidth: None,
        }
    }
}

/// State of the sampler: bounds, prior, observations, and the draw counter
/// that keeps suggestions deterministic and resumable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeState {
    lo: f64,
    hi: f64,
    prior: SigmaPrior,
    config: TpeConfig,
    observations: Vec<(f64, f64)>,
    seed: u64,
    draws: u64,
}

impl TpeState {
    /// Sampler over `[lo, hi]` with the default configuration.
    pub fn new(lo: f64, hi: f64, prior: SigmaPrior, seed: u64) -> Result<Self, HpoError> {
        TpeState::with_config(lo, hi, prior, TpeConfig::default(), seed)
    }

    pub fn with_config(
        lo: f64,
        hi: f64,
        prior: SigmaPrior,
        config: TpeConfig,
        seed: u64,
    ) -> Result<Self, HpoError> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(HpoError::BadBounds(format!(
                "sampling-width interval [{lo}, {hi}] must be positive and increasing"
            )));
        }
        if !(config.gamma > 0.0 && config.gamma < 1.0) {
            return Err(HpoError::BadBounds(format!(
                "split fraction {} outside (0, 1)",
                config.gamma
            )));
        }
        if config.n_candidates == 0 {
            return Err(HpoError::BadBounds("zero candidates per suggestion".into()));
        }
        if let Some(b) = config.bandwidth {
            if !(b > 0.0) {
                return Err(HpoError::BadBounds(format!("non-positive bandwidth {b}")));
            }
        }
        Ok(TpeState {
            lo,
            hi,
            prior,
            config,
            observations: Vec::new(),
            seed,
            draws: 0,
        })
    }

    /// Observations in insertion order as (σ, score) pairs.
    pub fn observations(&self) -> &[(f64, f64)] {
        &self.observations
    }

    /// Scores in completion order, for plateau detection.
    pub fn scores(&self) -> Vec<f64> {
        self.observations.iter().map(|&(_, q)| q).collect()
    }

    /// Record an evaluated suggestion.
    pub fn update(&mut self, sigma: f64, score: f64) {
        self.observations.push((sigma, score));
    }

    /// Next sampling width to evaluate, always within `[lo, hi]`.
    pub fn suggest(&mut self) -> f64 {
        let mut rng =
            ChaCha12Rng::seed_from_u64(self.seed ^ self.draws.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        self.draws += 1;
        if self.observations.len() < self.config.n_startup || self.observations.is_empty() {
            return self.prior.draw(&mut rng, self.lo, self.hi);
        }

        // Split into the best-γ and the rest, ties resolved by insertion
        // order so the split is deterministic.
        let n = self.observations.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.observations[a].1.total_cmp(&self.observations[b].1));
        let n_best = ((self.config.gamma * n as f64).ceil() as usize).clamp(1, (n - 1).max(1));
        let ln_of = |i: &usize| self.observations[*i].0.ln();
        let best: Vec<f64> = order[..n_best].iter().map(ln_of).collect();
        let rest: Vec<f64> = order[n_best..].iter().map(ln_of).collect();

        let bw_best = self.bandwidth(&best);
        let bw_rest = self.bandwidth(&rest);
        // With no "rest" observations the denominator degenerates to the
        // uniform density over the log-interval.
        let uniform_log_density = -(self.hi.ln() - self.lo.ln()).ln();

        let mut best_sigma = f64::NAN;
        let mut best_ratio = f64::NEG_INFINITY;
        for _ in 0..self.config.n_candidates {
            let sigma = self.prior.draw(&mut rng, self.lo, self.hi);
            let x = sigma.ln();
            let log_l = log_kde(x, &best, bw_best);
            let log_g = if rest.is_empty() {
                uniform_log_density
            } else {
                log_kde(x, &rest, bw_rest)
            };
            let ratio = log_l - log_g;
            if ratio > best_ratio || best_sigma.is_nan() {
                best_ratio = ratio;
                best_sigma = sigma;
            }
        }
        best_sigma
    }

    /// Kernel bandwidth for a set of points in ln-space: the configured
    /// override, or Silverman's rule 0.9·min(std, IQR/1.34)·n^(−1/5) floored
    /// away from zero.
    fn bandwidth(&self, points: &[f64]) -> f64 {
        if let Some(b) = self.config.bandwidth {
            return b;
        }
        let n = points.len();
        if n < 2 {
            return BANDWIDTH_FLOOR;
        }
        let mean = points.iter().sum::<f64>() / n as f64;
        let std =
            (points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);
        let scale = std.min(iqr / 1.34);
        (0.9 * scale * (n as f64).powf(-0.2)).max(BANDWIDTH_FLOOR)
    }
}

/// Linear-interpolation quantile of an ascending slice.
fn interpolated_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let pos = level * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Log-density of a Gaussian kernel estimate at `x`.
fn log_kde(x: f64, points: &[f64], bw: f64) -> f64 {
    let max = points
        .iter()
        .map(|p| -0.5 * ((x - p) / bw).powi(2))
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = points
        .iter()
        .map(|p| (-0.5 * ((x - p) / bw).powi(2) - max).exp())
        .sum();
    max + sum.ln() - (points.len() as f64).ln() - bw.ln() - 0.5 * LN_2PI
}
