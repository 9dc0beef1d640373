//! Ridge autoregression over the full window feature row.

use serde::{Deserialize, Serialize};

use super::{real_param, ForecasterError, PointModel};
use crate::data::SupervisedWindowSet;
use crate::forecast::PointForecast;
use crate::linalg::{cholesky, Mat};
use crate::scalar::Scalar;
use crate::space::HyperparamConfig;

/// Linear model per horizon step, fitted on centered inputs/targets via the
/// penalized normal equations `(Xc' Xc + alpha I) beta = Xc' Yc`. Centering
/// keeps the intercept out of the penalty, so `alpha -> inf` shrinks to the
/// training-target mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel<S> {
    input_dim: usize,
    horizon: usize,
    input_mean: Vec<S>,
    target_mean: Vec<S>,
    /// Column-stacked coefficients: `coef[step][feature]`.
    coef: Vec<Vec<S>>,
}

impl<S: Scalar> RidgeModel<S> {
    pub fn fit(
        config: &HyperparamConfig,
        windows: &SupervisedWindowSet<S>,
    ) -> Result<Self, ForecasterError> {
        let alpha = real_param(config, "alpha")?;
        if !(alpha >= 0.0) {
            return Err(ForecasterError::InvalidConfig(
                "alpha must be non-negative".into(),
            ));
        }
        let n = windows.len();
        let d = windows.input_dim();
        let h = windows.horizon();

        let mut input_mean = vec![S::zero(); d];
        let mut target_mean = vec![S::zero(); h];
        let rows: Vec<Vec<S>> = (0..n).map(|i| windows.input_row(i)).collect();
        for row in &rows {
            for (m, v) in input_mean.iter_mut().zip(row) {
                *m += *v;
            }
        }
        let inv_n = S::one() / S::cast_from(n as f64);
        for m in input_mean.iter_mut() {
            *m *= inv_n;
        }
        for sample in windows.samples() {
            for (m, v) in target_mean.iter_mut().zip(&sample.target) {
                *m += *v;
            }
        }
        for m in target_mean.iter_mut() {
            *m *= inv_n;
        }

        // Gram matrix of centered inputs plus the ridge diagonal.
        let mut gram = Mat::<S>::zeros(d, d);
        let mut xty = Mat::<S>::zeros(d, h);
        let mut centered = vec![S::zero(); d];
        for (i, row) in rows.iter().enumerate() {
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&input_mean)) {
                *c = *v - *m;
            }
            gram.add_outer(S::one(), &centered, &centered);
            let sample = &windows.samples()[i];
            for (a, &x) in centered.iter().enumerate() {
                for (b, (&y, &m)) in sample.target.iter().zip(&target_mean).enumerate() {
                    *xty.get_mut(a, b) += x * (y - m);
                }
            }
        }
        let ridge = S::cast_from(alpha);
        for j in 0..d {
            *gram.get_mut(j, j) += ridge;
        }
        let chol = cholesky(&gram).ok_or(ForecasterError::SingularSystem)?;
        let mut coef = vec![vec![S::zero(); d]; h];
        let mut rhs = vec![S::zero(); d];
        for (step, coefs) in coef.iter_mut().enumerate() {
            for (a, r) in rhs.iter_mut().enumerate() {
                *r = xty.get(a, step);
            }
            *coefs = chol.solve(&rhs);
        }
        Ok(RidgeModel {
            input_dim: d,
            horizon: h,
            input_mean,
            target_mean,
            coef,
        })
    }

    /// Euclidean norm of all coefficients (intercepts excluded).
    pub fn coef_norm(&self) -> S {
        self.coef
            .iter()
            .flat_map(|c| c.iter().map(|v| *v * *v))
            .sum::<S>()
            .sqrt()
    }
}

impl<S: Scalar> PointModel<S> for RidgeModel<S> {
    fn predict(
        &self,
        windows: &SupervisedWindowSet<S>,
    ) -> Result<PointForecast<S>, ForecasterError> {
        if windows.input_dim() != self.input_dim || windows.horizon() != self.horizon {
            return Err(ForecasterError::FeatureMismatch(format!(
                "model expects {} inputs x {} steps, windows provide {} x {}",
                self.input_dim,
                self.horizon,
                windows.input_dim(),
                windows.horizon()
            )));
        }
        let mut values = Vec::with_capacity(windows.len() * self.horizon);
        for i in 0..windows.len() {
            let row = windows.input_row(i);
            for step in 0..self.horizon {
                let mut acc = self.target_mean[step];
                for ((v, m), c) in row.iter().zip(&self.input_mean).zip(&self.coef[step]) {
                    acc += (*v - *m) * *c;
                }
                values.push(acc);
            }
        }
        Ok(PointForecast::new(
            windows.origins(),
            windows.origin_timestamps(),
            self.horizon,
            values,
        )?)
    }
}
