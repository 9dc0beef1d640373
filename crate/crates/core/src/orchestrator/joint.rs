//! Joint optimization of forecaster configuration and sampling width.
//!
//! The outer loop draws configurations from an evolutionary registry, fits a
//! point model per configuration, and tunes the sampling width — either with
//! a nested prior-informed inner search (joint mode) or by searching the
//! width as one more evolutionary dimension (ablation mode). Completed
//! trials flow back into the registry; the loop ends when the outer time
//! budget is spent.
//!
//! Two execution engines share that trial logic. Wall mode runs `workers`
//! threads against the registry behind a mutex and measures real durations.
//! Simulated mode replays backend-declared costs through a serial
//! virtual-time event loop: at equal times completions are applied before
//! starts (ties to the lowest worker id), admission is exact because costs
//! are known, and the whole scheduler state serializes, which is what makes
//! interrupted runs resume bit-identically.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backend::{TrialBackend, SIGMA_BOUNDS};
use super::sigma::optimize_sigma;
use super::{Budget, OrchestratorError};
use crate::hpo::prior::{prior_stats, SigmaPrior};
use crate::hpo::{EaConfig, EaState, TrialRecord};
use crate::space::{Dimension, HyperparamConfig, HyperparamSpace};

/// Name of the extra evolutionary dimension in ablation mode.
pub const SAMPLING_WIDTH_KEY: &str = "sampling_width";

/// Smallest duration a trial can be charged, so budgets always advance.
const MIN_TRIAL_SECONDS: f64 = 1e-9;

/// How trial durations are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Threads and a monotonic clock; durations are measured.
    Wall,
    /// Serial virtual-time replay of backend-declared costs; deterministic.
    Simulated,
}

/// Scheduler settings shared by the optimization entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub workers: usize,
    pub time: TimeMode,
    /// Derive a log-normal prior for the inner search from the population's
    /// best sampling widths (joint mode only).
    pub use_prior: bool,
}

impl RunOptions {
    pub fn simulated(seed: u64) -> Self {
        RunOptions {
            seed,
            workers: 1,
            time: TimeMode::Simulated,
            use_prior: true,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Whether the sampling width is tuned by a nested search or searched as an
/// extra evolutionary dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    Nested,
    JointSigma,
}

/// A trial whose outcome is known but whose completion time has not been
/// reached yet in virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflightTrial {
    pub worker: usize,
    pub start: f64,
    pub finish: f64,
    pub record: TrialRecord,
}

/// Mid-round scheduler state, kept only between an interrupt and its resume.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimPending {
    pub round_consumed: f64,
    pub inflight: Vec<InflightTrial>,
    /// Set once an admission was refused; no further starts this round, so
    /// a resumed run replays the exact same suggestion sequence.
    pub closed: bool,
}

/// Checkpointable optimization state of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub mode: JointMode,
    pub ea: EaState,
    /// This method's own timeline, in seconds; monotone across rounds.
    pub clock: f64,
    /// Total completed trial seconds across all rounds.
    pub consumed_seconds: f64,
    /// Trials started so far; seeds every trial deterministically.
    pub trial_seq: u64,
    /// Present only while a round is interrupted (simulated mode).
    pub pending: Option<SimPending>,
}

impl MethodRun {
    /// State for nested joint optimization over `space`.
    pub fn new(
        method: &str,
        space: HyperparamSpace,
        ea_config: EaConfig,
        seed: u64,
    ) -> Result<Self, OrchestratorError> {
        let ea = EaState::new(space, ea_config, seed ^ fnv1a(method))?;
        Ok(MethodRun {
            method: method.to_string(),
            mode: JointMode::Nested,
            ea,
            clock: 0.0,
            consumed_seconds: 0.0,
            trial_seq: 0,
            pending: None,
        })
    }

    /// State for ablation mode: the sampling width joins the searched space.
    pub fn new_ablation(
        method: &str,
        space: HyperparamSpace,
        ea_config: EaConfig,
        seed: u64,
    ) -> Result<Self, OrchestratorError> {
        let (lo, hi) = SIGMA_BOUNDS;
        let extended = space.with_dimension(
            SAMPLING_WIDTH_KEY,
            Dimension::LogReal { lo, hi, default: 0.3 },
        )?;
        let mut run = MethodRun::new(method, extended, ea_config, seed)?;
        run.mode = JointMode::JointSigma;
        Ok(run)
    }

    /// Insert an externally evaluated trial (warm start).
    pub fn inject(&mut self, record: TrialRecord) {
        self.consumed_seconds += record.wall_seconds;
        self.clock = self.clock.max(record.timestamp);
        self.ea.update(record);
    }

    /// Best completed trial so far.
    pub fn best(&self) -> Result<TrialRecord, OrchestratorError> {
        Ok(self.ea.population_best(1)?[0].clone())
    }
}

pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Evaluated outcome of one outer trial before scheduling bookkeeping.
pub(crate) struct TrialOutcome {
    pub(crate) score: f64,
    pub(crate) sigma_star: Option<f64>,
    pub(crate) cost: f64,
}

/// Fit and score one configuration; failures of any kind become a finite-
/// cost trial with an infinite score so the loop always terminates.
pub(crate) fn run_outer_trial(
    backend: &dyn TrialBackend,
    method: &str,
    mode: JointMode,
    config: &HyperparamConfig,
    trial_seed: u64,
    inner_cap: usize,
    prior: SigmaPrior,
) -> TrialOutcome {
    let attempt = catch_unwind(AssertUnwindSafe(
        || -> Result<TrialOutcome, OrchestratorError> {
            let mut trial = backend.fit(method, config, trial_seed)?;
            match mode {
                JointMode::Nested => {
                    let search = optimize_sigma(trial.as_mut(), inner_cap, prior, trial_seed)?;
                    Ok(TrialOutcome {
                        score: search.score,
                        sigma_star: Some(search.sigma),
                        cost: trial.fit_cost() + search.evaluations as f64 * trial.eval_cost(),
                    })
                }
                JointMode::JointSigma => {
                    let sigma = config
                        .get(SAMPLING_WIDTH_KEY)
                        .and_then(|v| v.as_real())
                        .ok_or_else(|| {
                            OrchestratorError::Backend(format!(
                                "configuration lacks {SAMPLING_WIDTH_KEY}"
                            ))
                        })?;
                    let score = trial.score_sigma(sigma, trial_seed ^ 0x6372_6e73)?;
                    Ok(TrialOutcome {
                        score,
                        sigma_star: Some(sigma),
                        cost: trial.fit_cost() + trial.eval_cost(),
                    })
                }
            }
        },
    ));
    match attempt {
        Ok(Ok(outcome)) => outcome,
        // Errors and panics alike mark the trial failed; it still consumes
        // budget through the backend's declared failure cost.
        Ok(Err(_)) | Err(_) => TrialOutcome {
            score: f64::INFINITY,
            sigma_star: None,
            cost: backend.failure_cost(method),
        },
    }
}

/// Prior for the inner search, distilled from the population when requested.
fn inner_prior(ea: &EaState, use_prior: bool) -> SigmaPrior {
    if !use_prior {
        return SigmaPrior::Uniform;
    }
    prior_stats(ea.records())
        .map(|stats| stats.to_prior())
        .unwrap_or(SigmaPrior::Uniform)
}

fn trial_seed(opts: &RunOptions, run: &MethodRun) -> u64 {
    opts.seed ^ fnv1a(&run.method) ^ run.trial_seq.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Run one budget round of joint optimization and return the best trial so
/// far. Resumes an interrupted round transparently when `run.pending` is set.
pub fn joint_optimize(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
) -> Result<TrialRecord, OrchestratorError> {
    debug_assert_eq!(run.mode, JointMode::Nested);
    let finished = joint_round(backend, run, budget, opts, None)?;
    debug_assert!(finished, "uninterrupted round always finishes");
    run.best()
}

/// Ablation variant: the evolutionary algorithm proposes (configuration,
/// sampling width) jointly and each trained model scores exactly one width.
pub fn joint_optimize_ablation(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
) -> Result<TrialRecord, OrchestratorError> {
    debug_assert_eq!(run.mode, JointMode::JointSigma);
    let finished = joint_round(backend, run, budget, opts, None)?;
    debug_assert!(finished, "uninterrupted round always finishes");
    run.best()
}

/// One round with an optional interrupt, reporting whether it ran to
/// completion. After `stop_after` completions the scheduler state is parked
/// in `run.pending` and `false` comes back. Interrupts require simulated
/// time.
pub(crate) fn joint_round(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
    stop_after: Option<usize>,
) -> Result<bool, OrchestratorError> {
    if opts.workers == 0 {
        return Err(OrchestratorError::BadBudget("zero workers".into()));
    }
    match opts.time {
        TimeMode::Simulated => sim_round(backend, run, budget, opts, stop_after),
        TimeMode::Wall => {
            if stop_after.is_some() {
                return Err(OrchestratorError::BadBudget(
                    "mid-round interrupts require simulated time".into(),
                ));
            }
            wall_round(backend, run, budget, opts)?;
            Ok(true)
        }
    }
}

/// Virtual-time event loop. Returns whether the round ran to completion.
fn sim_round(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
    stop_after: Option<usize>,
) -> Result<bool, OrchestratorError> {
    let mut pending = run.pending.take().unwrap_or_default();
    let mut completions = 0usize;
    loop {
        // Start phase: fill idle workers while admissions hold.
        while !pending.closed {
            let committed: f64 = pending.round_consumed
                + pending
                    .inflight
                    .iter()
                    .map(|t| t.record.wall_seconds)
                    .sum::<f64>();
            let idle = (0..opts.workers)
                .find(|w| pending.inflight.iter().all(|t| t.worker != *w));
            let Some(worker) = idle else { break };
            if committed >= budget.outer_seconds {
                pending.closed = true;
                break;
            }
            run.trial_seq += 1;
            let seed = trial_seed(opts, run);
            let config = run.ea.suggest(worker);
            let prior = inner_prior(&run.ea, opts.use_prior && run.mode == JointMode::Nested);
            let outcome = run_outer_trial(
                backend,
                &run.method,
                run.mode,
                &config,
                seed,
                budget.inner_evals,
                prior,
            );
            let cost = outcome.cost.max(MIN_TRIAL_SECONDS);
            // Costs are known up front in simulated time, so admission is
            // exact: a trial that would overrun is refused — unless nothing
            // ran this round yet, in which case the one guaranteed trial may
            // overshoot (a running trial completes).
            let first_of_round = pending.round_consumed == 0.0 && pending.inflight.is_empty();
            if committed + cost > budget.outer_seconds && !first_of_round {
                pending.closed = true;
                break;
            }
            let start = run.clock;
            let finish = start + cost;
            pending.inflight.push(InflightTrial {
                worker,
                start,
                finish,
                record: TrialRecord {
                    config,
                    score: outcome.score,
                    sigma_star: outcome.sigma_star,
                    wall_seconds: cost,
                    timestamp: finish,
                    worker,
                },
            });
        }

        // Completion phase: apply the earliest finish, ties to the lowest
        // worker id.
        if pending.inflight.is_empty() {
            break;
        }
        let next = pending
            .inflight
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.finish
                    .total_cmp(&b.finish)
                    .then(a.worker.cmp(&b.worker))
            })
            .map(|(i, _)| i)
            .expect("non-empty inflight set");
        let done = pending.inflight.remove(next);
        run.clock = run.clock.max(done.finish);
        pending.round_consumed += done.record.wall_seconds;
        run.consumed_seconds += done.record.wall_seconds;
        run.ea.update(done.record);
        completions += 1;
        if let Some(cap) = stop_after {
            if completions >= cap {
                run.pending = Some(pending);
                return Ok(false);
            }
        }
    }
    run.pending = None;
    Ok(true)
}

/// Lock-contention and throughput statistics of a wall-mode round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LockStats {
    pub acquisitions: u64,
    pub total_wait_seconds: f64,
    pub max_wait_seconds: f64,
    pub trials: u64,
    pub mean_trial_seconds: f64,
}

fn wall_round(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
) -> Result<LockStats, OrchestratorError> {
    if run.pending.is_some() {
        return Err(OrchestratorError::Checkpoint(
            "an interrupted simulated round cannot resume in wall mode".into(),
        ));
    }
    let base_clock = run.clock;
    let started = Instant::now();
    let inner_cap = budget.inner_evals;
    let use_prior = opts.use_prior && run.mode == JointMode::Nested;
    let mode = run.mode;
    let method = run.method.clone();

    struct Shared<'a> {
        run: &'a mut MethodRun,
        round_consumed: f64,
    }
    let shared = Mutex::new(Shared { run, round_consumed: 0.0 });
    let wait_ns_total = AtomicU64::new(0);
    let wait_ns_max = AtomicU64::new(0);
    let acquisitions = AtomicU64::new(0);
    let trial_ns_total = AtomicU64::new(0);
    let trials = AtomicU64::new(0);
    let lock = |label: &str| {
        let t0 = Instant::now();
        let guard = shared.lock().unwrap_or_else(|_| panic!("{label} lock poisoned"));
        let waited = t0.elapsed().as_nanos() as u64;
        wait_ns_total.fetch_add(waited, Ordering::Relaxed);
        wait_ns_max.fetch_max(waited, Ordering::Relaxed);
        acquisitions.fetch_add(1, Ordering::Relaxed);
        guard
    };

    std::thread::scope(|scope| {
        for worker in 0..opts.workers {
            let method = &method;
            let lock = &lock;
            let trial_ns_total = &trial_ns_total;
            let trials = &trials;
            scope.spawn(move || loop {
                let (config, seed, prior) = {
                    let mut g = lock("suggest");
                    if g.round_consumed >= budget.outer_seconds {
                        break;
                    }
                    g.run.trial_seq += 1;
                    let seed = trial_seed(opts, g.run);
                    let config = g.run.ea.suggest(worker);
                    let prior = inner_prior(&g.run.ea, use_prior);
                    (config, seed, prior)
                };
                let t0 = Instant::now();
                let outcome =
                    run_outer_trial(backend, method, mode, &config, seed, inner_cap, prior);
                let duration = t0.elapsed().as_secs_f64().max(MIN_TRIAL_SECONDS);
                trial_ns_total.fetch_add((duration * 1e9) as u64, Ordering::Relaxed);
                trials.fetch_add(1, Ordering::Relaxed);
                {
                    let mut g = lock("update");
                    let timestamp = base_clock + started.elapsed().as_secs_f64();
                    g.run.ea.update(TrialRecord {
                        config,
                        score: outcome.score,
                        sigma_star: outcome.sigma_star,
                        wall_seconds: duration,
                        timestamp,
                        worker,
                    });
                    g.round_consumed += duration;
                    g.run.consumed_seconds += duration;
                }
            });
        }
    });

    let shared = shared.into_inner().expect("no worker holds the registry");
    shared.run.clock = base_clock + started.elapsed().as_secs_f64();
    let n_trials = trials.load(Ordering::Relaxed);
    Ok(LockStats {
        acquisitions: acquisitions.load(Ordering::Relaxed),
        total_wait_seconds: wait_ns_total.load(Ordering::Relaxed) as f64 / 1e9,
        max_wait_seconds: wait_ns_max.load(Ordering::Relaxed) as f64 / 1e9,
        trials: n_trials,
        mean_trial_seconds: if n_trials == 0 {
            0.0
        } else {
            trial_ns_total.load(Ordering::Relaxed) as f64 / 1e9 / n_trials as f64
        },
    })
}

/// Wall-mode round that also reports registry contention; used to verify
/// that workers never wait on each other's evaluations.
pub fn joint_optimize_with_stats(
    backend: &dyn TrialBackend,
    run: &mut MethodRun,
    budget: &Budget,
    opts: &RunOptions,
) -> Result<(TrialRecord, LockStats), OrchestratorError> {
    if opts.time != TimeMode::Wall {
        return Err(OrchestratorError::BadBudget(
            "contention statistics require wall time".into(),
        ));
    }
    let stats = wall_round(backend, run, budget, opts)?;
    Ok((run.best()?, stats))
}
