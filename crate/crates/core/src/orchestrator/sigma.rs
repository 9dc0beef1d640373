//! Inner search over the sampling width of a fitted trial.

use super::backend::{FittedTrial, SIGMA_BOUNDS};
use super::OrchestratorError;
use crate::hpo::prior::SigmaPrior;
use crate::hpo::stop::early_stop;
use crate::hpo::tpe::TpeState;

/// Outcome of one inner search.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSearch {
    /// Best evaluated sampling width.
    pub sigma: f64,
    /// Its validation score.
    pub score: f64,
    /// Number of evaluations actually spent (≤ the cap).
    pub evaluations: usize,
    /// Every (σ, score) pair in evaluation order.
    pub history: Vec<(f64, f64)>,
}

/// Tune the sampling width of a fitted point model.
///
/// Runs suggest → score → update until the plateau detector fires or
/// `inner_cap` evaluations are spent, and returns the best evaluated pair.
/// All evaluations share one sampling seed (common random numbers), so
/// widths are compared on identical latent noise.
pub fn optimize_sigma(
    trial: &mut dyn FittedTrial,
    inner_cap: usize,
    prior: SigmaPrior,
    seed: u64,
) -> Result<SigmaSearch, OrchestratorError> {
    if inner_cap == 0 {
        return Err(OrchestratorError::BadBudget(
            "inner evaluation cap must be at least 1".into(),
        ));
    }
    let (lo, hi) = SIGMA_BOUNDS;
    let mut tpe = TpeState::new(lo, hi, prior, seed ^ 0x7369_676d)?;
    let sampling_seed = seed ^ 0x6372_6e73;
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    for _ in 0..inner_cap {
        let sigma = tpe.suggest();
        let score = trial.score_sigma(sigma, sampling_seed)?;
        tpe.update(sigma, score);
        history.push((sigma, score));
        scores.push(score);
        if early_stop(&scores) {
            break;
        }
    }
    let (best_idx, _) = history
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.1.total_cmp(&b.1))
        .expect("at least one evaluation");
    let (sigma, score) = history[best_idx];
    Ok(SigmaSearch {
        sigma,
        score,
        evaluations: history.len(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic objective with declared costs and a seed log.
    struct FnTrial<F: Fn(f64) -> f64 + Send> {
        f: F,
        seeds_seen: Vec<u64>,
    }

    impl<F: Fn(f64) -> f64 + Send> FnTrial<F> {
        fn new(f: F) -> Self {
            FnTrial { f, seeds_seen: Vec::new() }
        }
    }

    impl<F: Fn(f64) -> f64 + Send> FittedTrial for FnTrial<F> {
        fn score_sigma(&mut self, sigma: f64, seed: u64) -> Result<f64, OrchestratorError> {
            self.seeds_seen.push(seed);
            Ok((self.f)(sigma))
        }

        fn fit_cost(&self) -> f64 {
            1.0
        }

        fn eval_cost(&self) -> f64 {
            0.05
        }
    }

    #[test]
    fn cap_of_one_evaluates_exactly_once() {
        let mut trial = FnTrial::new(|s| s);
        let search = optimize_sigma(&mut trial, 1, SigmaPrior::Uniform, 0).unwrap();
        assert_eq!(search.evaluations, 1);
        assert_eq!(search.history.len(), 1);
        assert_eq!((search.sigma, search.score), search.history[0]);
        assert!(matches!(
            optimize_sigma(&mut trial, 0, SigmaPrior::Uniform, 0),
            Err(OrchestratorError::BadBudget(_))
        ));
    }

    #[test]
    fn constant_objective_stops_at_the_patience_floor() {
        // Identical scores plateau immediately; the detector needs five best
        // plus five consecutive confirmations, which overlap at nine trials.
        let mut trial = FnTrial::new(|_| 0.42);
        let search = optimize_sigma(&mut trial, 100, SigmaPrior::Uniform, 3).unwrap();
        assert_eq!(search.evaluations, 9);
    }

    #[test]
    fn all_evaluations_share_one_sampling_seed() {
        let mut trial = FnTrial::new(|s| (s - 0.7).abs());
        optimize_sigma(&mut trial, 20, SigmaPrior::Uniform, 11).unwrap();
        assert!(trial.seeds_seen.len() > 1);
        assert!(trial.seeds_seen.iter().all(|&s| s == trial.seeds_seen[0]));
        // A different search seed uses different noise.
        let mut other = FnTrial::new(|s| (s - 0.7).abs());
        optimize_sigma(&mut other, 5, SigmaPrior::Uniform, 12).unwrap();
        assert_ne!(other.seeds_seen[0], trial.seeds_seen[0]);
    }

    #[test]
    fn finds_the_minimum_of_a_smooth_objective() {
        // Unique minimum at σ0 = 0.5; a dense grid pins the oracle argmin.
        let objective = |s: f64| (s.ln() - 0.5f64.ln()).powi(2);
        let mut grid_best = (f64::NAN, f64::INFINITY);
        for i in 0..=100_000 {
            let s = 0.01 + (3.0 - 0.01) * i as f64 / 100_000.0;
            let q = objective(s);
            if q < grid_best.1 {
                grid_best = (s, q);
            }
        }
        assert!((grid_best.0 - 0.5).abs() < 1e-3, "oracle argmin {}", grid_best.0);

        let mut hits = 0;
        for seed in 0..50 {
            let mut trial = FnTrial::new(objective);
            let search = optimize_sigma(&mut trial, 30, SigmaPrior::Uniform, seed).unwrap();
            assert!(search.evaluations <= 30);
            if (search.sigma - 0.5).abs() <= 0.15 {
                hits += 1;
            }
        }
        assert!(hits >= 45, "only {hits}/50 searches came within 0.15 of the optimum");
    }

    #[test]
    fn informed_prior_never_slows_the_median_search() {
        let objective = |s: f64| (s.ln() - 0.5f64.ln()).powi(2);
        let evals = |prior: SigmaPrior, seed: u64| {
            let mut trial = FnTrial::new(objective);
            optimize_sigma(&mut trial, 60, prior, seed).unwrap().evaluations
        };
        let informed = SigmaPrior::LogNormal { m: 0.5f64.ln(), s: 0.05 };
        let mut with_prior: Vec<usize> = (0..50).map(|s| evals(informed, s)).collect();
        let mut without: Vec<usize> = (0..50).map(|s| evals(SigmaPrior::Uniform, s)).collect();
        with_prior.sort_unstable();
        without.sort_unstable();
        assert!(
            with_prior[25] <= without[25],
            "informed median {} vs uniform median {}",
            with_prior[25],
            without[25]
        );
    }

    #[test]
    fn returns_the_best_evaluated_pair() {
        let mut trial = FnTrial::new(|s| (s - 1.3).powi(2));
        let search = optimize_sigma(&mut trial, 25, SigmaPrior::Uniform, 5).unwrap();
        let best_in_history = search
            .history
            .iter()
            .map(|&(_, q)| q)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(search.score, best_in_history);
        assert!((0.01..=3.0).contains(&search.sigma));
    }
}
