//! Quantile forecasting on top of arbitrary point forecasters.
//!
//! The crate turns a deterministic day-ahead point forecast into calibrated
//! quantile forecasts by mapping each target window through a conditional
//! invertible network, sampling in the latent space around the encoded point
//! forecast, and reading empirical quantiles off the back-transformed
//! samples. Around that core sit classical interval baselines, a library of
//! point forecasters, scoring rules, and a budget-aware model-selection layer
//! (evolutionary outer search, density-ratio inner search, and successive
//! halving across methods) with checkpointing and compute-cost accounting.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix `f64`, which is what the pipeline and CLI use.

pub mod baselines;
pub mod cinn;
pub mod data;
pub mod forecast;
pub mod forecasters;
pub mod hpo;
pub mod linalg;
pub mod metrics;
pub mod orchestrator;
pub mod resources;
pub mod scalar;
pub mod space;
pub mod synthetic;

pub use forecast::{PointForecast as PointForecastOf, QuantileForecast as QuantileForecastOf};

/// Point forecast at the default precision.
pub type PointForecast = forecast::PointForecast<f64>;
/// Quantile forecast at the default precision.
pub type QuantileForecast = forecast::QuantileForecast<f64>;
