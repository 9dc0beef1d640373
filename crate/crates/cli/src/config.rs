//! Run configuration: a single JSON manifest describing data, methods,
//! budgets, and output, so an experiment is reproducible from one file.
//!
//! Every field beyond the data location, forecast geometry, method list,
//! mode, and output directory has a sensible default; a minimal manifest is
//! seven lines. Unknown fields are rejected so typos fail loudly instead of
//! silently running with defaults.

use std::path::{Path, PathBuf};

use autoquant_core::cinn::SamplingConfig;
use autoquant_core::data::{CsvSchema, FeatureSpec};
use autoquant_core::forecasters::MethodId;
use autoquant_core::orchestrator::{JointMode, TimeMode};
use autoquant_core::resources::{PriceModel, DEFAULT_CPU_WATTS};
use serde::{Deserialize, Serialize};

use crate::errors::CliError;

/// Environment variable that overrides the manifest's seed.
pub const SEED_ENV_VAR: &str = "AUTOQUANT_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub features: FeatureSpec,
    /// Point-forecasting methods entered into the selection run.
    pub methods: Vec<String>,
    pub mode: RunMode,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub sampling: SamplingOptions,
    #[serde(default)]
    pub resources: ResourcesConfig,
    pub output_dir: PathBuf,
    /// Trial-duration source. Simulated time keeps runs bit-reproducible;
    /// wall time exercises real parallelism at the price of schedule
    /// nondeterminism.
    #[serde(default = "default_time")]
    pub time: TimeMode,
    /// Seed the width search from the last fitted trial's best width.
    #[serde(default = "default_true")]
    pub use_prior: bool,
    /// Divide the per-round budget by the total planned round count instead
    /// of spending the full budget every round.
    #[serde(default)]
    pub total_budget_mode: bool,
    /// Clamp emitted quantiles at zero (for non-negative targets).
    #[serde(default)]
    pub nonnegative: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
    /// Inclusive end rows of the train and validation ranges. Omitted means
    /// a 60/20/20 chronological split.
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: usize,
    pub val_end: usize,
}

/// Forecast geometry: the model sees `history` past values and predicts
/// `horizon` steps ahead.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub history: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// One default-configuration fit per method; only the sampling width is
    /// optimized.
    Default,
    /// Joint hyperparameter + sampling-width search with successive halving.
    Advanced,
    /// Halving over hyperparameters with the sampling width folded into the
    /// outer space (one width evaluation per fit).
    Ablation,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Default => "default",
            RunMode::Advanced => "advanced",
            RunMode::Ablation => "ablation",
        }
    }

    /// Outer-search flavor for the non-default modes.
    pub fn joint_mode(self) -> JointMode {
        match self {
            RunMode::Ablation => JointMode::JointSigma,
            _ => JointMode::Nested,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    /// Outer budget per method and round, in (virtual or wall) seconds.
    /// Required for the advanced and ablation modes.
    pub total_seconds: f64,
    /// Inner iteration cap for the sampling-width search.
    pub inner_evals: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            total_seconds: 0.0,
            inner_evals: 25,
        }
    }
}

/// Architecture and training settings for the conditioning flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub blocks: usize,
    pub hidden_width: usize,
    pub condition_dim: usize,
    pub alpha: f64,
    /// Zero skips training and samples through the freshly initialized
    /// (identity) flow — useful for smoke runs.
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            blocks: 8,
            hidden_width: 32,
            condition_dim: 16,
            alpha: 2.0,
            epochs: 100,
            batch: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingOptions {
    /// Latent sample count per forecast cell.
    pub m: usize,
    /// Quantile levels to emit, strictly increasing in (0, 1).
    pub levels: Vec<f64>,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            m: 100,
            levels: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResourcesConfig {
    /// Power draw attributed to compute phases, in watts.
    pub cpu_watts: f64,
    /// Hourly price; omitted means no monetary column in reports.
    pub price: Option<PriceModel>,
}

impl Default for ResourcesConfig {
    fn default() -> Self {
        ResourcesConfig {
            cpu_watts: DEFAULT_CPU_WATTS,
            price: None,
        }
    }
}

fn default_workers() -> usize {
    4
}

fn default_time() -> TimeMode {
    TimeMode::Simulated
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Read, seed-override, and validate a manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.apply_env_seed(std::env::var(SEED_ENV_VAR).ok().as_deref())?;
        config.validate()?;
        Ok(config)
    }

    /// Replace the manifest seed with the environment override, if any.
    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<(), CliError> {
        if let Some(raw) = value {
            self.seed = raw.trim().parse().map_err(|_| {
                CliError::Config(format!("{SEED_ENV_VAR} must be an unsigned integer, got `{raw}`"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.method_ids()?;
        if self.geometry.history == 0 || self.geometry.horizon == 0 {
            return Err(CliError::Config(
                "geometry.history and geometry.horizon must be at least 1".into(),
            ));
        }
        if let Some(split) = &self.dataset.split {
            if split.train_end >= split.val_end {
                return Err(CliError::Config(format!(
                    "split.train_end ({}) must be below split.val_end ({})",
                    split.train_end, split.val_end
                )));
            }
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.budget.inner_evals == 0 {
            return Err(CliError::Config("budget.inner_evals must be at least 1".into()));
        }
        if self.mode != RunMode::Default
            && !(self.budget.total_seconds.is_finite() && self.budget.total_seconds > 0.0)
        {
            return Err(CliError::Config(format!(
                "empty budget rejected: mode `{}` needs budget.total_seconds > 0",
                self.mode.as_str()
            )));
        }
        let f = &self.flow;
        if f.blocks == 0 || f.hidden_width == 0 || f.condition_dim == 0 || f.batch == 0 {
            return Err(CliError::Config(
                "flow.blocks, hidden_width, condition_dim, and batch must be at least 1".into(),
            ));
        }
        if !(f.alpha > 0.0) || !(f.learning_rate > 0.0) {
            return Err(CliError::Config(
                "flow.alpha and flow.learning_rate must be positive".into(),
            ));
        }
        SamplingConfig::new(1.0, self.sampling.m, self.sampling.levels.clone())
            .map_err(|e| CliError::Config(format!("sampling: {e}")))?;
        if !(self.resources.cpu_watts > 0.0) {
            return Err(CliError::Config("resources.cpu_watts must be positive".into()));
        }
        if let Some(price) = &self.resources.price {
            if !(price.per_hour >= 0.0) {
                return Err(CliError::Config("resources.price.per_hour must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Parsed method ids, rejecting unknown and duplicate names.
    pub fn method_ids(&self) -> Result<Vec<MethodId>, CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        let mut ids = Vec::with_capacity(self.methods.len());
        for name in &self.methods {
            let id = MethodId::parse(name)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if ids.contains(&id) {
                return Err(CliError::Config(format!("duplicate method `{name}`")));
            }
            ids.push(id);
        }
        Ok(ids)
    }
}
