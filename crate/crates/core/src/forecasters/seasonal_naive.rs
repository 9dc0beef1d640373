//! Seasonal persistence: repeat the last observed seasonal cycle.

use super::{cat_param, ForecasterError, PointModel};
use crate::data::SupervisedWindowSet;
use crate::forecast::PointForecast;
use crate::scalar::Scalar;
use crate::space::HyperparamConfig;

/// Forecast step h copies the history value one period back:
/// `yhat[h] = w[W - p + ((h-1) mod p)]` for a history window `w` of length
/// `W`. Requires `W >= p`.
#[derive(Debug, Clone)]
pub struct SeasonalNaiveModel {
    period: usize,
}

impl SeasonalNaiveModel {
    pub fn fit<S: Scalar>(
        config: &HyperparamConfig,
        windows: &SupervisedWindowSet<S>,
    ) -> Result<Self, ForecasterError> {
        let period: usize = cat_param(config, "period")?
            .parse()
            .map_err(|_| ForecasterError::InvalidConfig("period must be an integer".into()))?;
        if windows.history_len() + 1 < period {
            return Err(ForecasterError::FeatureMismatch(format!(
                "history window of {} values is shorter than period {period}",
                windows.history_len() + 1
            )));
        }
        Ok(SeasonalNaiveModel { period })
    }

    pub fn period(&self) -> usize {
        self.period
    }
}

impl<S: Scalar> PointModel<S> for SeasonalNaiveModel {
    fn predict(
        &self,
        windows: &SupervisedWindowSet<S>,
    ) -> Result<PointForecast<S>, ForecasterError> {
        let w_len = windows.history_len() + 1;
        if w_len < self.period {
            return Err(ForecasterError::FeatureMismatch(format!(
                "history window of {w_len} values is shorter than period {}",
                self.period
            )));
        }
        let h = windows.horizon();
        let mut values = Vec::with_capacity(windows.len() * h);
        for sample in windows.samples() {
            let w = &sample.history;
            for step in 1..=h {
                values.push(w[w_len - self.period + ((step - 1) % self.period)]);
            }
        }
        Ok(PointForecast::new(
            windows.origins(),
            windows.origin_timestamps(),
            h,
            values,
        )?)
    }
}
