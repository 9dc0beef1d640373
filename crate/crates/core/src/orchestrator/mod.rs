//! Budget-aware automated selection pipelines.
//!
//! Three entry points build on the same trial machinery: the default
//! pipeline ([`halving::autopq_default`]) fits every method once with its
//! default configuration and tunes only the sampling width; the advanced
//! pipeline ([`halving::successive_halving`]) runs nested joint optimization
//! ([`joint::joint_optimize`]) per method and prunes the worse half after
//! each budget round; the ablation mode searches the sampling width as one
//! more evolutionary dimension instead of nesting an inner loop.
//!
//! Evaluation work is abstracted behind [`backend::TrialBackend`], so the
//! schedulers run equally against the real forecasting pipeline
//! ([`pipeline::PipelineBackend`]) and against constructed objective
//! landscapes used by the test suites. Time is either measured (wall mode,
//! multi-threaded) or declared by the backend and replayed by a serial
//! virtual-time scheduler (simulated mode), which is what makes
//! interrupt/resume bit-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cinn::CinnError;
use crate::data::DataError;
use crate::forecasters::ForecasterError;
use crate::hpo::HpoError;
use crate::metrics::MetricsError;
use crate::space::HyperparamConfig;

pub mod backend;
pub mod halving;
pub mod joint;
pub mod pipeline;
pub mod pool;
pub mod sigma;
pub mod store;

pub use backend::{FittedTrial, Landscape, LandscapeBackend, TrialBackend};
pub use halving::{
    autopq_default, run_halving, successive_halving, HalvingOptions, HalvingProgress, Interrupt,
};
pub use joint::{
    joint_optimize, joint_optimize_ablation, JointMode, MethodRun, RunOptions, TimeMode,
};
pub use pipeline::{evaluate_config, PipelineBackend};
pub use sigma::{optimize_sigma, SigmaSearch};
pub use store::{MethodEntry, ResultStore, STORE_VERSION};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("trial generator error: {0}")]
    Hpo(#[from] HpoError),
    #[error("flow error: {0}")]
    Cinn(#[from] CinnError),
    #[error("forecaster error: {0}")]
    Forecaster(#[from] ForecasterError),
    #[error("metric error: {0}")]
    Metrics(#[from] MetricsError),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("search space error: {0}")]
    Space(#[from] crate::space::SpaceError),
    #[error("invalid budget: {0}")]
    BadBudget(String),
    #[error("no methods to optimize")]
    EmptyMethods,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("checkpoint unusable: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
}

/// Outer wall-time budget and inner iteration cap of one optimization run.
///
/// Consumed amounts are tracked where they accrue: completed outer trial
/// durations on the per-method run state, inner evaluations on each
/// [`sigma::SigmaSearch`]. A trial admitted while the outer budget was open
/// runs to completion, so consumption may overshoot by the in-flight trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Outer-loop budget in (wall or simulated) seconds.
    pub outer_seconds: f64,
    /// Inner-loop cap on sampling-width evaluations per outer trial.
    pub inner_evals: usize,
}

impl Budget {
    pub fn new(outer_seconds: f64, inner_evals: usize) -> Result<Self, OrchestratorError> {
        if !(outer_seconds > 0.0) {
            return Err(OrchestratorError::BadBudget(format!(
                "outer budget {outer_seconds} s must be positive"
            )));
        }
        if inner_evals == 0 {
            return Err(OrchestratorError::BadBudget(
                "inner evaluation cap must be at least 1".into(),
            ));
        }
        Ok(Budget { outer_seconds, inner_evals })
    }
}

/// Best score a method reached, as reported in pruning history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBest {
    pub method: String,
    /// Infinite when every trial of the method failed; serialized through
    /// the same sentinel as trial scores so checkpoints survive it.
    #[serde(with = "crate::hpo::score_serde")]
    pub score: f64,
}

/// One pruning round: who was active, how much budget each method got, what
/// they scored, and who survived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningRound {
    pub round: usize,
    pub budget_per_method: f64,
    pub active: Vec<String>,
    pub bests: Vec<MethodBest>,
    pub kept: Vec<String>,
}

/// Final result of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashOutcome {
    /// Winning method; always a member of the final round's survivors.
    pub winner: String,
    /// Winning point-forecaster configuration.
    pub config: HyperparamConfig,
    /// Winning sampling width.
    pub sigma: f64,
    /// Validation score of the winner.
    pub validation_score: f64,
    /// Test score, filled in by the caller after the final evaluation.
    pub test_score: Option<f64>,
    /// Full pruning history, one entry per completed round.
    pub rounds: Vec<PruningRound>,
}
