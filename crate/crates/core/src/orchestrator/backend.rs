//! Evaluation backends for the schedulers.
//!
//! A backend turns (method, configuration) into a fitted trial that can
//! score sampling widths. The real forecasting pipeline implements this in
//! [`super::pipeline`]; [`LandscapeBackend`] replays constructed objective
//! functions with declared costs, which gives the scheduler tests and the
//! acceptance suite exact, cheap landscapes.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::OrchestratorError;
use crate::space::{HyperparamConfig, HyperparamSpace};

/// Sampling-width search interval shared by all pipelines.
pub const SIGMA_BOUNDS: (f64, f64) = (0.01, 3.0);

/// A point model fitted for one configuration, ready to score sampling
/// widths on validation data.
pub trait FittedTrial: Send {
    /// Validation score (lower is better) of sampling width `sigma`.
    ///
    /// `sampling_seed` drives the latent noise; searches pass the same seed
    /// to every call so widths are compared on common random numbers.
    fn score_sigma(&mut self, sigma: f64, sampling_seed: u64) -> Result<f64, OrchestratorError>;

    /// Declared cost of the fit, in virtual seconds (simulated-time mode).
    fn fit_cost(&self) -> f64;

    /// Declared cost of one sampling-width evaluation, in virtual seconds.
    fn eval_cost(&self) -> f64;
}

/// Source of fitted trials.
pub trait TrialBackend: Send + Sync {
    fn methods(&self) -> Vec<String>;

    fn space(&self, method: &str) -> Result<HyperparamSpace, OrchestratorError>;

    fn fit(
        &self,
        method: &str,
        config: &HyperparamConfig,
        seed: u64,
    ) -> Result<Box<dyn FittedTrial>, OrchestratorError>;

    /// Virtual seconds charged when a fit fails outright, so failed trials
    /// still consume budget in simulated time and cannot starve a run.
    fn failure_cost(&self, _method: &str) -> f64 {
        1.0
    }
}

type Objective = Arc<dyn Fn(&HyperparamConfig, f64) -> f64 + Send + Sync>;

/// A constructed objective for one method: score as a pure function of
/// (configuration, sampling width), plus declared costs.
#[derive(Clone)]
pub struct Landscape {
    pub space: HyperparamSpace,
    objective: Objective,
    pub fit_cost: f64,
    pub eval_cost: f64,
}

impl Landscape {
    /// Landscape with unit fit cost and a cheap evaluation cost.
    pub fn new<F>(space: HyperparamSpace, objective: F) -> Self
    where
        F: Fn(&HyperparamConfig, f64) -> f64 + Send + Sync + 'static,
    {
        Landscape {
            space,
            objective: Arc::new(objective),
            fit_cost: 1.0,
            eval_cost: 0.05,
        }
    }

    pub fn with_costs(mut self, fit_cost: f64, eval_cost: f64) -> Self {
        self.fit_cost = fit_cost;
        self.eval_cost = eval_cost;
        self
    }
}

/// Backend over constructed landscapes, keyed by method name.
#[derive(Clone, Default)]
pub struct LandscapeBackend {
    methods: Vec<String>,
    landscapes: BTreeMap<String, Landscape>,
}

impl LandscapeBackend {
    pub fn new() -> Self {
        LandscapeBackend::default()
    }

    pub fn with_method(mut self, name: &str, landscape: Landscape) -> Self {
        if !self.landscapes.contains_key(name) {
            self.methods.push(name.to_string());
        }
        self.landscapes.insert(name.to_string(), landscape);
        self
    }

    fn landscape(&self, method: &str) -> Result<&Landscape, OrchestratorError> {
        self.landscapes
            .get(method)
            .ok_or_else(|| OrchestratorError::UnknownMethod(method.to_string()))
    }
}

struct LandscapeTrial {
    objective: Objective,
    config: HyperparamConfig,
    fit_cost: f64,
    eval_cost: f64,
}

impl FittedTrial for LandscapeTrial {
    fn score_sigma(&mut self, sigma: f64, _sampling_seed: u64) -> Result<f64, OrchestratorError> {
        Ok((self.objective)(&self.config, sigma))
    }

    fn fit_cost(&self) -> f64 {
        self.fit_cost
    }

    fn eval_cost(&self) -> f64 {
        self.eval_cost
    }
}

impl TrialBackend for LandscapeBackend {
    fn methods(&self) -> Vec<String> {
        self.methods.clone()
    }

    fn space(&self, method: &str) -> Result<HyperparamSpace, OrchestratorError> {
        Ok(self.landscape(method)?.space.clone())
    }

    fn fit(
        &self,
        method: &str,
        config: &HyperparamConfig,
        _seed: u64,
    ) -> Result<Box<dyn FittedTrial>, OrchestratorError> {
        let l = self.landscape(method)?;
        Ok(Box::new(LandscapeTrial {
            objective: l.objective.clone(),
            config: config.clone(),
            fit_cost: l.fit_cost,
            eval_cost: l.eval_cost,
        }))
    }
}

/// One-real-dimension space used by scheduler tests.
pub fn unit_space() -> HyperparamSpace {
    HyperparamSpace::new(vec![(
        "x".to_string(),
        crate::space::Dimension::Real { lo: 0.0, hi: 1.0, default: 0.5 },
    )])
    .expect("valid test space")
}
