//! Method selection: successive halving over the joint optimizer, and the
//! cheaper default pipeline that tunes only the sampling width.
//!
//! Halving runs every active method for an equal slice of the round budget,
//! keeps the best ⌈n/2⌉ by validation score, and repeats until one method
//! survives. Pruned methods keep their full optimization state so nothing is
//! lost to a later warm start or inspection. The default pipeline instead
//! fits each method once with its default configuration, optimizes the
//! sampling width, and picks the best — it doubles as "round 0" of a
//! warm-started halving run.

use serde::{Deserialize, Serialize};

use super::backend::TrialBackend;
use super::joint::{fnv1a, joint_round, run_outer_trial, JointMode, RunOptions, TimeMode};
use super::pool::run_pool;
use super::store::{ResultStore, RoundProgress};
use super::{Budget, CashOutcome, MethodBest, OrchestratorError, PruningRound};
use crate::hpo::prior::SigmaPrior;
use crate::hpo::{EaConfig, TrialRecord};

/// Scheduler settings for a halving run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalvingOptions {
    pub workers: usize,
    pub time: TimeMode,
    /// Feed population statistics into the inner width search.
    pub use_prior: bool,
    /// Split the outer budget evenly across all rounds instead of granting
    /// it to every round (the literal reading stays the default).
    pub total_budget_mode: bool,
}

impl Default for HalvingOptions {
    fn default() -> Self {
        HalvingOptions {
            workers: 4,
            time: TimeMode::Simulated,
            use_prior: true,
            total_budget_mode: false,
        }
    }
}

/// Request to pause a run after a number of trial completions, used to
/// exercise checkpoint fidelity. `method_index` counts active methods of
/// the round in registration order; `completions` counts trials finished in
/// that method's slice (from the resume point, if it was already pending).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interrupt {
    pub round: usize,
    pub method_index: usize,
    pub completions: usize,
}

/// Outcome of a (possibly interrupted) halving run.
#[derive(Debug, Clone, PartialEq)]
pub enum HalvingProgress {
    Finished(CashOutcome),
    /// The store now carries `round_in_progress`; save it and call again.
    Interrupted,
}

/// Rounds a full halving run takes from `n` registered methods.
fn rounds_for(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    let mut n = n;
    let mut rounds = 0;
    while n > 1 {
        n = n.div_ceil(2);
        rounds += 1;
    }
    rounds
}

fn best_key(entry: &super::store::MethodEntry) -> (f64, f64) {
    entry
        .best
        .as_ref()
        .map_or((f64::INFINITY, f64::INFINITY), |b| (b.score, b.timestamp))
}

/// Drive a store to completion (or to the requested interrupt).
///
/// The store may be fresh, warm-started from a default run, or loaded from
/// a checkpoint mid-round; the function continues from whatever state it
/// finds. Budgets follow the per-round reading: every round grants
/// `B_t / n_active` to each active method, unless `total_budget_mode`
/// divides `B_t` across the rounds implied by the full method roster first.
pub fn run_halving(
    backend: &dyn TrialBackend,
    store: &mut ResultStore,
    budget: &Budget,
    opts: &HalvingOptions,
    interrupt: Option<Interrupt>,
) -> Result<HalvingProgress, OrchestratorError> {
    let run_opts = RunOptions {
        seed: store.seed,
        workers: opts.workers,
        time: opts.time,
        use_prior: opts.use_prior,
    };
    let total_rounds = rounds_for(store.methods.len());

    loop {
        let active: Vec<usize> = (0..store.methods.len())
            .filter(|&i| store.methods[i].active)
            .collect();
        if active.is_empty() {
            return Err(OrchestratorError::EmptyMethods);
        }
        let sole_survivor =
            active.len() == 1 && !store.methods[active[0]].run.ea.records().is_empty();
        if sole_survivor {
            break;
        }

        // Round setup, or pick up an interrupted round where it stopped.
        let (round_no, budget_per_method, mut done) = match store.round_in_progress.take() {
            Some(p) => (p.round, p.budget_per_method, p.done_methods),
            None => {
                let round_no = store.rounds.iter().map(|r| r.round).max().map_or(1, |m| m + 1);
                let pool = if opts.total_budget_mode {
                    budget.outer_seconds / total_rounds as f64
                } else {
                    budget.outer_seconds
                };
                (round_no, pool / active.len() as f64, Vec::new())
            }
        };
        let slice = Budget::new(budget_per_method, budget.inner_evals)?;

        for (pos, &idx) in active.iter().enumerate() {
            let name = store.methods[idx].name.clone();
            if done.contains(&name) {
                continue;
            }
            let stop = interrupt
                .filter(|i| i.round == round_no && i.method_index == pos)
                .map(|i| i.completions);
            let finished =
                joint_round(backend, &mut store.methods[idx].run, &slice, &run_opts, stop)?;
            if !finished {
                store.round_in_progress = Some(RoundProgress {
                    round: round_no,
                    budget_per_method,
                    done_methods: done,
                });
                return Ok(HalvingProgress::Interrupted);
            }
            store.refresh_best(idx);
            done.push(name);
        }

        // Keep the best ⌈n/2⌉; ties go to the earlier champion, then to
        // registration order. Pruned methods keep their state.
        let keep_n = active.len().div_ceil(2);
        let mut ranked = active.clone();
        ranked.sort_by(|&a, &b| {
            let (sa, ta) = best_key(&store.methods[a]);
            let (sb, tb) = best_key(&store.methods[b]);
            sa.total_cmp(&sb).then(ta.total_cmp(&tb)).then(a.cmp(&b))
        });
        let keep = &ranked[..keep_n];
        for &idx in &active {
            store.methods[idx].active = keep.contains(&idx);
        }
        store.rounds.push(PruningRound {
            round: round_no,
            budget_per_method,
            active: active.iter().map(|&i| store.methods[i].name.clone()).collect(),
            bests: active
                .iter()
                .map(|&i| MethodBest {
                    method: store.methods[i].name.clone(),
                    score: best_key(&store.methods[i]).0,
                })
                .collect(),
            kept: active
                .iter()
                .filter(|i| keep.contains(i))
                .map(|&i| store.methods[i].name.clone())
                .collect(),
        });
    }

    let winner_idx = (0..store.methods.len())
        .find(|&i| store.methods[i].active)
        .expect("loop guarantees one active method");
    let best = store.methods[winner_idx].run.best()?;
    // A terminal history row records the survivor, unless a finished run is
    // merely being re-read.
    if store.rounds.last().map_or(true, |r| r.active.len() != 1) {
        let name = store.methods[winner_idx].name.clone();
        let round_no = store.rounds.iter().map(|r| r.round).max().map_or(1, |m| m + 1);
        store.rounds.push(PruningRound {
            round: round_no,
            budget_per_method: 0.0,
            active: vec![name.clone()],
            bests: vec![MethodBest { method: name.clone(), score: best.score }],
            kept: vec![name],
        });
    }
    Ok(HalvingProgress::Finished(outcome_of(store, winner_idx, &best)?))
}

fn outcome_of(
    store: &ResultStore,
    winner_idx: usize,
    best: &TrialRecord,
) -> Result<CashOutcome, OrchestratorError> {
    let sigma = best.sigma_star.ok_or_else(|| {
        OrchestratorError::Backend("winning trial lacks a sampling width".into())
    })?;
    Ok(CashOutcome {
        winner: store.methods[winner_idx].name.clone(),
        config: best.config.clone(),
        sigma,
        validation_score: best.score,
        test_score: None,
        rounds: store.rounds.clone(),
    })
}

/// Full selection run over the backend's methods, from a fresh store.
pub fn successive_halving(
    backend: &dyn TrialBackend,
    budget: &Budget,
    seed: u64,
    opts: &HalvingOptions,
    mode: JointMode,
) -> Result<(CashOutcome, ResultStore), OrchestratorError> {
    let mut store = ResultStore::new(backend, seed, EaConfig::default(), mode)?;
    match run_halving(backend, &mut store, budget, opts, None)? {
        HalvingProgress::Finished(outcome) => Ok((outcome, store)),
        HalvingProgress::Interrupted => unreachable!("no interrupt was requested"),
    }
}

/// Default pipeline: every method is fitted once with its default
/// configuration, only the sampling width is optimized, and the best
/// validation score wins. The returned store doubles as round 0 of a
/// warm-started halving run.
pub fn autopq_default(
    backend: &dyn TrialBackend,
    inner_evals: usize,
    seed: u64,
    workers: usize,
) -> Result<(CashOutcome, ResultStore), OrchestratorError> {
    if workers == 0 {
        return Err(OrchestratorError::BadBudget("zero workers".into()));
    }
    if inner_evals == 0 {
        return Err(OrchestratorError::BadBudget(
            "inner iteration cap must be positive".into(),
        ));
    }
    let mut store = ResultStore::new(backend, seed, EaConfig::default(), JointMode::Nested)?;
    let tasks: Vec<(usize, String)> = store
        .methods
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.name.clone()))
        .collect();
    let results = run_pool(tasks, workers, |_lane, (index, name)| {
        let config = match backend.space(&name) {
            Ok(space) => space.default_config(),
            Err(_) => Default::default(),
        };
        let outcome = run_outer_trial(
            backend,
            &name,
            JointMode::Nested,
            &config,
            seed ^ fnv1a(&name) ^ 0x6466_6c74,
            inner_evals,
            SigmaPrior::Uniform,
        );
        (
            index,
            TrialRecord {
                config,
                score: outcome.score,
                sigma_star: outcome.sigma_star,
                wall_seconds: outcome.cost,
                timestamp: index as f64,
                worker: 0,
            },
        )
    });
    for result in results {
        let (index, record) = result.map_err(|p| {
            OrchestratorError::Backend(format!("default-fit worker panicked: {}", p.message))
        })?;
        store.methods[index].run.inject(record);
        store.refresh_best(index);
    }

    let names = store.active_names();
    store.rounds.push(PruningRound {
        round: 0,
        budget_per_method: 0.0,
        active: names.clone(),
        bests: store
            .methods
            .iter()
            .map(|e| MethodBest { method: e.name.clone(), score: best_key(e).0 })
            .collect(),
        kept: names,
    });

    let mut winner_idx = None;
    let mut winner_score = f64::INFINITY;
    for (i, entry) in store.methods.iter().enumerate() {
        if let Some(best) = &entry.best {
            if best.score < winner_score {
                winner_score = best.score;
                winner_idx = Some(i);
            }
        }
    }
    let winner_idx = winner_idx.ok_or_else(|| {
        OrchestratorError::Backend("every method failed its default fit".into())
    })?;
    let best = store.methods[winner_idx].run.best()?;
    let outcome = outcome_of(&store, winner_idx, &best)?;
    Ok((outcome, store))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::backend::{unit_space, Landscape, LandscapeBackend};
    use crate::space::HyperparamConfig;

    fn x_of(cfg: &HyperparamConfig) -> f64 {
        cfg.get("x").and_then(|v| v.as_real()).unwrap()
    }

    fn constant_backend(values: &[f64]) -> LandscapeBackend {
        let mut backend = LandscapeBackend::new();
        for (i, &v) in values.iter().enumerate() {
            backend = backend.with_method(
                &format!("m{}", i + 1),
                Landscape::new(unit_space(), move |_, _| v),
            );
        }
        backend
    }

    fn sim_opts(workers: usize) -> HalvingOptions {
        HalvingOptions {
            workers,
            time: TimeMode::Simulated,
            ..HalvingOptions::default()
        }
    }

    #[test]
    fn constant_objectives_force_the_textbook_pruning() {
        let backend = constant_backend(&[0.3, 0.2, 0.5, 0.4]);
        let budget = Budget::new(4.0, 20).unwrap();
        let (outcome, store) =
            successive_halving(&backend, &budget, 0, &sim_opts(1), JointMode::Nested).unwrap();

        assert_eq!(outcome.winner, "m2");
        assert_eq!(outcome.validation_score, 0.2);
        assert_eq!(outcome.rounds.len(), 3);
        assert_eq!(outcome.rounds[0].active, vec!["m1", "m2", "m3", "m4"]);
        assert_eq!(outcome.rounds[0].kept, vec!["m1", "m2"]);
        assert_eq!(outcome.rounds[1].active, vec!["m1", "m2"]);
        assert_eq!(outcome.rounds[1].kept, vec!["m2"]);
        assert_eq!(outcome.rounds[2].active, vec!["m2"]);
        // Pruned methods keep their optimization state.
        assert!(!store.entry("m3").unwrap().active);
        assert!(!store.entry("m3").unwrap().run.ea.records().is_empty());
    }

    #[test]
    fn active_counts_follow_the_ceil_halving_pattern() {
        let values: Vec<f64> = (0..9).map(|i| 0.1 * (i + 1) as f64).collect();
        let backend = constant_backend(&values);
        let budget = Budget::new(1.0, 15).unwrap();
        let (outcome, store) =
            successive_halving(&backend, &budget, 1, &sim_opts(2), JointMode::Nested).unwrap();
        let counts: Vec<usize> = outcome.rounds.iter().map(|r| r.active.len()).collect();
        assert_eq!(counts, vec![9, 5, 3, 2, 1]);
        assert_eq!(outcome.winner, "m1");
        // Budget soundness per participated round: the tiny budget forces
        // one-trial overshoots, never more than one trial past the slice.
        let max_trial = 1.0 + 15.0 * 0.05;
        for entry in &store.methods {
            let participated = outcome
                .rounds
                .iter()
                .filter(|r| r.budget_per_method > 0.0 && r.active.contains(&entry.name))
                .count() as f64;
            assert!(
                entry.run.consumed_seconds
                    <= participated * (budget.outer_seconds + max_trial) + 1e-9,
                "{} consumed {}",
                entry.name,
                entry.run.consumed_seconds
            );
        }
    }

    #[test]
    fn a_dominant_method_is_never_pruned_and_wins() {
        let mut backend = LandscapeBackend::new();
        for (i, offset) in [0.0, 0.3, 0.5, 0.7, 0.9].into_iter().enumerate() {
            backend = backend.with_method(
                &format!("m{}", i + 1),
                Landscape::new(unit_space(), move |cfg, sigma| {
                    offset + (x_of(cfg) - 0.3).powi(2) + (sigma.ln() - 0.5f64.ln()).powi(2)
                }),
            );
        }
        let budget = Budget::new(8.0, 20).unwrap();
        let (outcome, _) =
            successive_halving(&backend, &budget, 5, &sim_opts(2), JointMode::Nested).unwrap();
        assert_eq!(outcome.winner, "m1");
        for round in &outcome.rounds {
            assert!(round.kept.contains(&"m1".to_string()));
        }
    }

    #[test]
    fn interrupted_halving_resumes_to_an_identical_outcome() {
        let make_backend = || {
            let mut backend = LandscapeBackend::new();
            for (i, target) in [0.2, 0.4, 0.6, 0.8].into_iter().enumerate() {
                backend = backend.with_method(
                    &format!("m{}", i + 1),
                    Landscape::new(unit_space(), move |cfg, sigma| {
                        (x_of(cfg) - target).powi(2)
                            + 0.5 * (sigma.ln() - 0.5f64.ln()).powi(2)
                            + 0.05 * target
                    }),
                );
            }
            backend
        };
        let budget = Budget::new(10.0, 20).unwrap();
        let opts = sim_opts(2);

        let backend = make_backend();
        let (straight, straight_store) =
            successive_halving(&backend, &budget, 21, &opts, JointMode::Nested).unwrap();

        let mut store =
            ResultStore::new(&backend, 21, EaConfig::default(), JointMode::Nested).unwrap();
        let paused = run_halving(
            &backend,
            &mut store,
            &budget,
            &opts,
            Some(Interrupt { round: 2, method_index: 1, completions: 1 }),
        )
        .unwrap();
        assert_eq!(paused, HalvingProgress::Interrupted);
        assert!(store.round_in_progress.is_some());

        // Persist, reload, and finish on the reloaded state.
        let dir = tempfile::tempdir().unwrap();
        store.save_dir(dir.path()).unwrap();
        let mut reloaded = ResultStore::load_dir(dir.path()).unwrap();
        let resumed = match run_halving(&backend, &mut reloaded, &budget, &opts, None).unwrap() {
            HalvingProgress::Finished(outcome) => outcome,
            HalvingProgress::Interrupted => panic!("run should finish"),
        };

        assert_eq!(
            serde_json::to_string(&straight).unwrap(),
            serde_json::to_string(&resumed).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&straight_store).unwrap(),
            serde_json::to_string(&reloaded).unwrap()
        );
    }

    #[test]
    fn warm_start_from_the_default_run_never_regresses() {
        let mut backend = LandscapeBackend::new();
        for (i, target) in [0.25, 0.55, 0.85].into_iter().enumerate() {
            backend = backend.with_method(
                &format!("m{}", i + 1),
                Landscape::new(unit_space(), move |cfg, sigma| {
                    (x_of(cfg) - target).powi(2) + (sigma.ln() - 0.5f64.ln()).powi(2)
                }),
            );
        }
        let (default_outcome, mut store) = autopq_default(&backend, 15, 4, 2).unwrap();
        assert_eq!(store.rounds.len(), 1);
        assert_eq!(store.rounds[0].round, 0);
        assert_eq!(store.rounds[0].kept.len(), 3);
        // The default winner is the argmin of the per-method scores.
        let min_score = store
            .rounds[0]
            .bests
            .iter()
            .map(|b| b.score)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(default_outcome.validation_score, min_score);

        let budget = Budget::new(9.0, 20).unwrap();
        let advanced = match run_halving(&backend, &mut store, &budget, &sim_opts(2), None)
            .unwrap()
        {
            HalvingProgress::Finished(outcome) => outcome,
            HalvingProgress::Interrupted => panic!("run should finish"),
        };
        assert!(advanced.validation_score <= default_outcome.validation_score);
        assert_eq!(advanced.rounds[0].round, 0);
        assert_eq!(advanced.rounds[1].round, 1);
        assert_eq!(advanced.rounds[1].active.len(), 3);
    }

    #[test]
    fn a_single_method_runs_one_round_and_wins() {
        let backend = LandscapeBackend::new().with_method(
            "only",
            Landscape::new(unit_space(), |cfg, sigma| {
                (x_of(cfg) - 0.5).powi(2) + (sigma.ln() - 0.5f64.ln()).powi(2)
            }),
        );
        let budget = Budget::new(5.0, 15).unwrap();
        let (outcome, store) =
            successive_halving(&backend, &budget, 8, &sim_opts(1), JointMode::Nested).unwrap();
        assert_eq!(outcome.winner, "only");
        assert_eq!(outcome.rounds.len(), 1);
        assert_eq!(outcome.rounds[0].active, vec!["only"]);
        assert!(!store.entry("only").unwrap().run.ea.records().is_empty());
    }

    #[test]
    fn total_budget_mode_divides_the_budget_across_rounds() {
        let backend = constant_backend(&[0.1, 0.2, 0.3, 0.4]);
        let budget = Budget::new(16.0, 10).unwrap();
        let literal =
            successive_halving(&backend, &budget, 3, &sim_opts(1), JointMode::Nested)
                .unwrap()
                .0;
        assert_eq!(literal.rounds[0].budget_per_method, 4.0);
        assert_eq!(literal.rounds[1].budget_per_method, 8.0);

        let opts = HalvingOptions { total_budget_mode: true, ..sim_opts(1) };
        let total =
            successive_halving(&backend, &budget, 3, &opts, JointMode::Nested).unwrap().0;
        // Two rounds for four methods: each gets half the budget up front.
        assert_eq!(total.rounds[0].budget_per_method, 2.0);
        assert_eq!(total.rounds[1].budget_per_method, 4.0);
    }

    #[test]
    fn a_method_that_always_fails_is_pruned_first_but_kept_on_disk() {
        let mut backend = LandscapeBackend::new();
        backend = backend.with_method(
            "good",
            Landscape::new(unit_space(), |cfg, _| (x_of(cfg) - 0.5).powi(2)),
        );
        backend = backend.with_method(
            "doomed",
            Landscape::new(unit_space(), |_, _| panic!("always fails")),
        );
        backend = backend.with_method(
            "okay",
            Landscape::new(unit_space(), |cfg, _| 0.2 + (x_of(cfg) - 0.5).powi(2)),
        );
        let budget = Budget::new(6.0, 10).unwrap();
        let (outcome, store) =
            successive_halving(&backend, &budget, 13, &sim_opts(1), JointMode::Nested).unwrap();
        assert_eq!(outcome.winner, "good");
        assert!(!outcome.rounds[0].kept.contains(&"doomed".to_string()));
        let doomed = store.entry("doomed").unwrap();
        assert!(!doomed.active);
        assert!(!doomed.run.ea.records().is_empty());
        assert!(doomed.run.ea.records().iter().all(|r| r.score.is_infinite()));
        assert!(doomed.best.is_none());

        // The infinite round best must survive a disk round-trip; plain JSON
        // has no infinity, so this exercises the score sentinel.
        assert!(store.rounds[0].bests.iter().any(|b| b.score.is_infinite()));
        let dir = tempfile::tempdir().unwrap();
        store.save_dir(dir.path()).unwrap();
        let reloaded = ResultStore::load_dir(dir.path()).unwrap();
        assert_eq!(reloaded, store);
    }

    #[test]
    fn ablation_mode_halving_also_selects_a_winner() {
        let backend = constant_backend(&[0.4, 0.1]);
        let budget = Budget::new(4.0, 5).unwrap();
        let (outcome, store) =
            successive_halving(&backend, &budget, 2, &sim_opts(1), JointMode::JointSigma)
                .unwrap();
        assert_eq!(outcome.winner, "m2");
        // Every trial carries the width it was scored with.
        for entry in &store.methods {
            for record in entry.run.ea.records() {
                assert!(record.sigma_star.is_some());
            }
        }
    }
}
