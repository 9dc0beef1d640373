//! Trial backend over the real forecasting pipeline.
//!
//! A trial fits a point forecaster on the training windows, predicts the
//! validation windows once, and then scores any number of sampling widths by
//! pushing that fixed point forecast through the flow and taking the mean
//! CRPS against the validation truths. The flow, truths, and condition
//! vectors are shared across trials; only the point model is per-trial
//! state, which keeps worker memory proportional to the active trial count.
//!
//! Costs are declared, not measured: in simulated-time runs one fit counts
//! as `fit_cost` virtual seconds and one width evaluation as `eval_cost`.
//! The defaults (1.0 and 0.05) encode the pipeline's central economics —
//! width evaluations are more than an order of magnitude cheaper than fits,
//! which is why nesting a width search inside every outer trial pays off.

use std::sync::Arc;

use super::backend::{FittedTrial, TrialBackend};
use super::OrchestratorError;
use crate::cinn::{quantiles_from_point, CinnModel, SamplingConfig};
use crate::data::SupervisedWindowSet;
use crate::forecast::{PointForecast, QuantileForecast};
use crate::forecasters::{self, MethodId};
use crate::metrics::{crps_dataset, DatasetScore};
use crate::space::{HyperparamConfig, HyperparamSpace};

/// Default declared cost of one point-model fit, in virtual seconds.
pub const DEFAULT_FIT_COST: f64 = 1.0;
/// Default declared cost of one sampling-width evaluation.
pub const DEFAULT_EVAL_COST: f64 = 0.05;

/// Shared, immutable evaluation context.
struct Context {
    cinn: Arc<CinnModel<f64>>,
    val_truth: Vec<f64>,
    val_conditions: Vec<Vec<f64>>,
    m: usize,
    levels: Vec<f64>,
}

/// [`TrialBackend`] that fits registered forecasting methods on real
/// windows and scores sampling widths on a validation split.
pub struct PipelineBackend {
    methods: Vec<MethodId>,
    train: SupervisedWindowSet<f64>,
    val: SupervisedWindowSet<f64>,
    context: Arc<Context>,
    fit_cost: f64,
    eval_cost: f64,
}

impl PipelineBackend {
    pub fn new(
        methods: &[MethodId],
        train: SupervisedWindowSet<f64>,
        val: SupervisedWindowSet<f64>,
        cinn: Arc<CinnModel<f64>>,
        m: usize,
        levels: Vec<f64>,
    ) -> Result<Self, OrchestratorError> {
        if methods.is_empty() {
            return Err(OrchestratorError::EmptyMethods);
        }
        if train.is_empty() || val.is_empty() {
            return Err(OrchestratorError::Backend(
                "training and validation window sets must be non-empty".into(),
            ));
        }
        if train.horizon() != cinn.horizon() || val.horizon() != cinn.horizon() {
            return Err(OrchestratorError::Backend(format!(
                "window horizon {}/{} does not match the flow horizon {}",
                train.horizon(),
                val.horizon(),
                cinn.horizon()
            )));
        }
        if val.condition_dim() != cinn.raw_condition_dim() {
            return Err(OrchestratorError::Backend(format!(
                "condition width {} does not match the flow's {}",
                val.condition_dim(),
                cinn.raw_condition_dim()
            )));
        }
        // Surfaces invalid sample counts and levels before any trial runs.
        SamplingConfig::new(1.0, m, levels.clone())?;
        let context = Arc::new(Context {
            cinn,
            val_truth: val.target_matrix(),
            val_conditions: val.conditions(),
            m,
            levels,
        });
        Ok(PipelineBackend {
            methods: methods.to_vec(),
            train,
            val,
            context,
            fit_cost: DEFAULT_FIT_COST,
            eval_cost: DEFAULT_EVAL_COST,
        })
    }

    /// Override the declared virtual-time costs.
    pub fn with_costs(mut self, fit_cost: f64, eval_cost: f64) -> Self {
        self.fit_cost = fit_cost;
        self.eval_cost = eval_cost;
        self
    }

    pub fn method_ids(&self) -> &[MethodId] {
        &self.methods
    }
}

impl TrialBackend for PipelineBackend {
    fn methods(&self) -> Vec<String> {
        self.methods.iter().map(|m| m.as_str().to_string()).collect()
    }

    fn space(&self, method: &str) -> Result<HyperparamSpace, OrchestratorError> {
        Ok(forecasters::config_space(MethodId::parse(method)?))
    }

    fn fit(
        &self,
        method: &str,
        config: &HyperparamConfig,
        seed: u64,
    ) -> Result<Box<dyn FittedTrial>, OrchestratorError> {
        let id = MethodId::parse(method)?;
        let model = forecasters::fit(id, config, &self.train, seed)?;
        let forecast = model.predict(&self.val)?;
        Ok(Box::new(PipelineTrial {
            forecast,
            context: self.context.clone(),
            fit_cost: self.fit_cost,
            eval_cost: self.eval_cost,
        }))
    }

    fn failure_cost(&self, _method: &str) -> f64 {
        self.fit_cost
    }
}

/// One fitted point model's validation forecast, ready for width scoring.
pub struct PipelineTrial {
    forecast: PointForecast<f64>,
    context: Arc<Context>,
    fit_cost: f64,
    eval_cost: f64,
}

impl FittedTrial for PipelineTrial {
    fn score_sigma(&mut self, sigma: f64, sampling_seed: u64) -> Result<f64, OrchestratorError> {
        let ctx = &*self.context;
        let sc = SamplingConfig::new(sigma, ctx.m, ctx.levels.clone())?;
        let qf = quantiles_from_point(&ctx.cinn, &self.forecast, &ctx.val_conditions, &sc, sampling_seed)?;
        Ok(crps_dataset(&qf, &ctx.val_truth)?.value)
    }

    fn fit_cost(&self) -> f64 {
        self.fit_cost
    }

    fn eval_cost(&self) -> f64 {
        self.eval_cost
    }
}

/// Fit `config` on `train`, forecast `eval`, and score the quantiles against
/// the eval truths. Deterministic in (config, data, seeds); used for final
/// test-set assessment and report generation.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_config(
    method: &str,
    config: &HyperparamConfig,
    sigma: f64,
    train: &SupervisedWindowSet<f64>,
    eval: &SupervisedWindowSet<f64>,
    cinn: &CinnModel<f64>,
    m: usize,
    levels: &[f64],
    seed: u64,
) -> Result<(QuantileForecast<f64>, DatasetScore), OrchestratorError> {
    let id = MethodId::parse(method)?;
    let model = forecasters::fit(id, config, train, seed)?;
    let forecast = model.predict(eval)?;
    let sc = SamplingConfig::new(sigma, m, levels.to_vec())?;
    let qf = quantiles_from_point(cinn, &forecast, &eval.conditions(), &sc, seed ^ 0x6372_6e73)?;
    let score = crps_dataset(&qf, &eval.target_matrix())?;
    Ok((qf, score))
}
