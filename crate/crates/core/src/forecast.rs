//! Forecast containers shared across the crate.
//!
//! A [`PointForecast`] is an origins x horizon grid of point predictions. A
//! [`QuantileForecast`] adds a quantile axis and, when it came out of a
//! sampling procedure, keeps the underlying samples so scoring can use the
//! full empirical distribution rather than the quantile grid.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at origin {origin}, step {step}")]
    NonFinite { origin: usize, step: usize },
    #[error("quantile levels must be strictly increasing inside (0, 1)")]
    BadLevels,
    #[error("quantile values decrease in level at origin {origin}, step {step}")]
    NonMonotone { origin: usize, step: usize },
}

/// Point predictions over a grid of forecast origins and horizon steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointForecast<S> {
    origins: Vec<usize>,
    origin_timestamps: Vec<NaiveDateTime>,
    horizon: usize,
    /// Row-major, `origins.len() * horizon`.
    values: Vec<S>,
}

impl<S: Scalar> PointForecast<S> {
    pub fn new(
        origins: Vec<usize>,
        origin_timestamps: Vec<NaiveDateTime>,
        horizon: usize,
        values: Vec<S>,
    ) -> Result<Self, ForecastError> {
        if origins.len() != origin_timestamps.len() {
            return Err(ForecastError::Shape(format!(
                "{} origins but {} timestamps",
                origins.len(),
                origin_timestamps.len()
            )));
        }
        if values.len() != origins.len() * horizon {
            return Err(ForecastError::Shape(format!(
                "{} values for {} origins x {} steps",
                values.len(),
                origins.len(),
                horizon
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ForecastError::NonFinite {
                    origin: i / horizon,
                    step: i % horizon,
                });
            }
        }
        Ok(PointForecast {
            origins,
            origin_timestamps,
            horizon,
            values,
        })
    }

    pub fn n_origins(&self) -> usize {
        self.origins.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn origin_timestamps(&self) -> &[NaiveDateTime] {
        &self.origin_timestamps
    }

    /// All `horizon` predictions for one origin.
    pub fn row(&self, origin_idx: usize) -> &[S] {
        &self.values[origin_idx * self.horizon..(origin_idx + 1) * self.horizon]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }
}

/// Quantile predictions, optionally with the generating samples retained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileForecast<S> {
    origins: Vec<usize>,
    origin_timestamps: Vec<NaiveDateTime>,
    horizon: usize,
    /// Ascending, strictly inside (0, 1).
    levels: Vec<f64>,
    /// Row-major `origins x horizon x levels`.
    values: Vec<S>,
    /// Row-major `origins x horizon x m`; per-cell samples sorted ascending.
    samples: Option<(usize, Vec<S>)>,
}

impl<S: Scalar> QuantileForecast<S> {
    pub fn new(
        origins: Vec<usize>,
        origin_timestamps: Vec<NaiveDateTime>,
        horizon: usize,
        levels: Vec<f64>,
        values: Vec<S>,
        samples: Option<(usize, Vec<S>)>,
    ) -> Result<Self, ForecastError> {
        if origins.len() != origin_timestamps.len() {
            return Err(ForecastError::Shape(
                "origin/timestamp length mismatch".into(),
            ));
        }
        if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ForecastError::BadLevels);
        }
        if levels[0] <= 0.0 || *levels.last().unwrap() >= 1.0 {
            return Err(ForecastError::BadLevels);
        }
        if values.len() != origins.len() * horizon * levels.len() {
            return Err(ForecastError::Shape(format!(
                "{} quantile values for {} origins x {} steps x {} levels",
                values.len(),
                origins.len(),
                horizon,
                levels.len()
            )));
        }
        if let Some((m, s)) = &samples {
            if *m == 0 || s.len() != origins.len() * horizon * m {
                return Err(ForecastError::Shape("sample block size mismatch".into()));
            }
        }
        let nl = levels.len();
        for (cell, chunk) in values.chunks_exact(nl).enumerate() {
            let (origin, step) = (cell / horizon, cell % horizon);
            for w in chunk.windows(2) {
                if w[1] < w[0] {
                    return Err(ForecastError::NonMonotone { origin, step });
                }
            }
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(ForecastError::NonFinite { origin, step });
            }
        }
        Ok(QuantileForecast {
            origins,
            origin_timestamps,
            horizon,
            levels,
            values,
            samples,
        })
    }

    pub fn n_origins(&self) -> usize {
        self.origins.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn origin_timestamps(&self) -> &[NaiveDateTime] {
        &self.origin_timestamps
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Flattened `(origin, step, level)` values.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Quantile curve (one value per level) for a cell.
    pub fn cell(&self, origin_idx: usize, step: usize) -> &[S] {
        let nl = self.levels.len();
        let base = (origin_idx * self.horizon + step) * nl;
        &self.values[base..base + nl]
    }

    /// Value at a specific level index.
    pub fn value(&self, origin_idx: usize, step: usize, level_idx: usize) -> S {
        self.cell(origin_idx, step)[level_idx]
    }

    /// Position of a level, within floating-point exactness.
    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l - level).abs() < 1e-12)
    }

    /// Sorted generating samples for a cell, when retained.
    pub fn cell_samples(&self, origin_idx: usize, step: usize) -> Option<&[S]> {
        self.samples.as_ref().map(|(m, s)| {
            let base = (origin_idx * self.horizon + step) * m;
            &s[base..base + m]
        })
    }

    pub fn has_samples(&self) -> bool {
        self.samples.is_some()
    }

    /// Clamp every quantile (and retained sample) below `floor` up to it.
    /// Quantile curves stay monotone because clamping is monotone.
    pub fn clamp_below(&mut self, floor: S) {
        for v in &mut self.values {
            if *v < floor {
                *v = floor;
            }
        }
        if let Some((_, s)) = &mut self.samples {
            for v in s.iter_mut() {
                if *v < floor {
                    *v = floor;
                }
            }
        }
    }
}

/// Empirical quantile of an ascending sample vector with midpoint plotting
/// positions `(i + 0.5) / m` and linear interpolation between them; clamped
/// to the extreme samples outside that range.
pub fn quantile_of_sorted<S: Scalar>(sorted: &[S], level: f64) -> S {
    let m = sorted.len();
    assert!(m > 0, "quantile of empty sample set");
    let pos = level * m as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (m - 1) as f64 {
        return sorted[m - 1];
    }
    let j = pos.floor() as usize;
    let t = S::cast_from(pos - j as f64);
    sorted[j] + t * (sorted[j + 1] - sorted[j])
}
