//! Point forecasting methods behind a uniform interface.
//!
//! Four families are registered: a seasonal persistence baseline, a ridge
//! autoregression with exogenous inputs, a from-scratch gradient-boosted
//! tree ensemble, and a small multilayer perceptron. Each exposes a default
//! configuration and a searchable configuration space; fitting is
//! deterministic given (configuration, data, seed).

mod gbt;
mod mlp;
mod ridge;
mod seasonal_naive;

pub use gbt::GbtModel;
pub use mlp::MlpModel;
pub use ridge::RidgeModel;
pub use seasonal_naive::SeasonalNaiveModel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SupervisedWindowSet;
use crate::forecast::{ForecastError, PointForecast};
use crate::scalar::Scalar;
use crate::space::{Dimension, HyperparamConfig, HyperparamSpace, ParamValue, SpaceError};

#[derive(Debug, Error)]
pub enum ForecasterError {
    #[error("unknown method id `{0}`")]
    UnknownMethod(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training window set is empty")]
    EmptyTrainingSet,
    #[error("normal equations are singular; increase the ridge penalty")]
    SingularSystem,
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Identifier of a registered point forecasting method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    SeasonalNaive,
    RidgeArx,
    Gbt,
    Mlp,
}

impl MethodId {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::SeasonalNaive => "seasonal_naive",
            MethodId::RidgeArx => "ridge_arx",
            MethodId::Gbt => "gbt",
            MethodId::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ForecasterError> {
        match s {
            "seasonal_naive" => Ok(MethodId::SeasonalNaive),
            "ridge_arx" => Ok(MethodId::RidgeArx),
            "gbt" => Ok(MethodId::Gbt),
            "mlp" => Ok(MethodId::Mlp),
            other => Err(ForecasterError::UnknownMethod(other.to_string())),
        }
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All registered methods, in registry order.
pub fn all_methods() -> [MethodId; 4] {
    [
        MethodId::SeasonalNaive,
        MethodId::RidgeArx,
        MethodId::Gbt,
        MethodId::Mlp,
    ]
}

/// A fitted, immutable point forecaster.
pub trait PointModel<S: Scalar>: Send + Sync {
    fn predict(&self, windows: &SupervisedWindowSet<S>) -> Result<PointForecast<S>, ForecasterError>;

    /// Non-fatal conditions raised during fitting (e.g. reaching the epoch
    /// limit without the early-stopping criterion firing).
    fn warnings(&self) -> &[String] {
        &[]
    }
}

/// Searchable configuration space of a method.
pub fn config_space(method: MethodId) -> HyperparamSpace {
    let space = match method {
        MethodId::SeasonalNaive => HyperparamSpace::new(vec![(
            "period".to_string(),
            Dimension::Cat {
                choices: vec!["24".to_string(), "168".to_string()],
                default: 0,
            },
        )]),
        MethodId::RidgeArx => HyperparamSpace::new(vec![(
            "alpha".to_string(),
            Dimension::LogReal {
                lo: 1e-8,
                hi: 1e2,
                default: 1.0,
            },
        )]),
        MethodId::Gbt => HyperparamSpace::new(vec![
            (
                "learning_rate".to_string(),
                Dimension::Real {
                    lo: 0.01,
                    hi: 1.0,
                    default: 0.3,
                },
            ),
            (
                "max_depth".to_string(),
                Dimension::Int {
                    lo: 1,
                    hi: 18,
                    default: 6,
                },
            ),
            (
                "n_estimators".to_string(),
                Dimension::Int {
                    lo: 10,
                    hi: 300,
                    default: 100,
                },
            ),
            (
                "sub_sample".to_string(),
                Dimension::Real {
                    lo: 0.5,
                    hi: 1.0,
                    default: 1.0,
                },
            ),
        ]),
        MethodId::Mlp => HyperparamSpace::new(vec![
            (
                "activation".to_string(),
                Dimension::Cat {
                    choices: vec![
                        "logistic".to_string(),
                        "tanh".to_string(),
                        "relu".to_string(),
                    ],
                    default: 2,
                },
            ),
            (
                "batch_size".to_string(),
                Dimension::Cat {
                    choices: vec!["32".to_string(), "64".to_string(), "128".to_string()],
                    default: 1,
                },
            ),
            (
                "n_layers".to_string(),
                Dimension::Int {
                    lo: 1,
                    hi: 3,
                    default: 1,
                },
            ),
            (
                "width1".to_string(),
                Dimension::Int {
                    lo: 10,
                    hi: 100,
                    default: 100,
                },
            ),
            (
                "width2".to_string(),
                Dimension::Int {
                    lo: 10,
                    hi: 100,
                    default: 100,
                },
            ),
            (
                "width3".to_string(),
                Dimension::Int {
                    lo: 10,
                    hi: 100,
                    default: 100,
                },
            ),
        ]),
    };
    space.expect("registry spaces are well-formed")
}

/// Per-dimension defaults of a method's space.
pub fn default_config(method: MethodId) -> HyperparamConfig {
    config_space(method).default_config()
}

/// Fit a method on training windows. Deterministic given
/// (config, data, seed).
pub fn fit<S: Scalar>(
    method: MethodId,
    config: &HyperparamConfig,
    windows: &SupervisedWindowSet<S>,
    seed: u64,
) -> Result<Box<dyn PointModel<S>>, ForecasterError> {
    if windows.is_empty() {
        return Err(ForecasterError::EmptyTrainingSet);
    }
    config_space(method)
        .validate(config)
        .map_err(|e| ForecasterError::InvalidConfig(e.to_string()))?;
    match method {
        MethodId::SeasonalNaive => Ok(Box::new(SeasonalNaiveModel::fit(config, windows)?)),
        MethodId::RidgeArx => Ok(Box::new(RidgeModel::fit(config, windows)?)),
        MethodId::Gbt => Ok(Box::new(GbtModel::fit(config, windows, seed)?)),
        MethodId::Mlp => Ok(Box::new(MlpModel::fit(config, windows, seed)?)),
    }
}

pub(crate) fn real_param(
    config: &HyperparamConfig,
    name: &str,
) -> Result<f64, ForecasterError> {
    config
        .get(name)
        .and_then(ParamValue::as_real)
        .ok_or_else(|| ForecasterError::InvalidConfig(format!("missing real `{name}`")))
}

pub(crate) fn int_param(config: &HyperparamConfig, name: &str) -> Result<i64, ForecasterError> {
    config
        .get(name)
        .and_then(ParamValue::as_int)
        .ok_or_else(|| ForecasterError::InvalidConfig(format!("missing int `{name}`")))
}

pub(crate) fn cat_param<'c>(
    config: &'c HyperparamConfig,
    name: &str,
) -> Result<&'c str, ForecasterError> {
    config
        .get(name)
        .and_then(ParamValue::as_str)
        .ok_or_else(|| ForecasterError::InvalidConfig(format!("missing categorical `{name}`")))
}
