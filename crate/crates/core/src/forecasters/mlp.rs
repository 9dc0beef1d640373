//! Multilayer perceptron trained with momentum SGD and early stopping.
//!
//! One network maps the stacked window input to all horizon steps at once
//! under a mean-squared-error loss. A seeded 20% hold-out of the training
//! windows drives early stopping; the best hold-out weights are restored.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{cat_param, int_param, ForecasterError, PointModel};
use crate::data::SupervisedWindowSet;
use crate::forecast::PointForecast;
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::space::HyperparamConfig;

const LEARNING_RATE: f64 = 1e-3;
const MOMENTUM: f64 = 0.9;
const MAX_EPOCHS: usize = 200;
const PATIENCE: usize = 5;
const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Tanh,
    Relu,
}

impl Activation {
    fn parse(s: &str) -> Result<Self, ForecasterError> {
        match s {
            "logistic" => Ok(Activation::Logistic),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(ForecasterError::InvalidConfig(format!(
                "unknown activation `{other}`"
            ))),
        }
    }

    fn apply<S: Scalar>(&self, x: S) -> S {
        match self {
            Activation::Logistic => S::one() / (S::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output<S: Scalar>(&self, a: S) -> S {
        match self {
            Activation::Logistic => a * (S::one() - a),
            Activation::Tanh => S::one() - a * a,
            Activation::Relu => {
                if a > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
        }
    }
}

/// Dense layers: weights[l] has shape (out, in); hidden layers apply the
/// activation, the final layer is linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel<S> {
    input_dim: usize,
    horizon: usize,
    activation: Activation,
    weights: Vec<Mat<S>>,
    biases: Vec<Vec<S>>,
    warnings: Vec<String>,
}

fn glorot_init<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<S> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = S::cast_from(rng.gen_range(-bound..bound));
    }
    m
}

impl<S: Scalar> MlpModel<S> {
    fn layer_sizes(config: &HyperparamConfig, input: usize, output: usize) -> Result<Vec<usize>, ForecasterError> {
        let n_layers = int_param(config, "n_layers")? as usize;
        if !(1..=3).contains(&n_layers) {
            return Err(ForecasterError::InvalidConfig(
                "n_layers must be 1..=3".into(),
            ));
        }
        let mut sizes = vec![input];
        for l in 0..n_layers {
            sizes.push(int_param(config, &format!("width{}", l + 1))? as usize);
        }
        sizes.push(output);
        Ok(sizes)
    }

    fn new_random(sizes: &[usize], rng: &mut ChaCha12Rng) -> (Vec<Mat<S>>, Vec<Vec<S>>) {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            weights.push(glorot_init(w[1], w[0], rng));
            biases.push(vec![S::zero(); w[1]]);
        }
        (weights, biases)
    }

    /// Forward pass storing every layer's output (post-activation).
    fn forward_trace(&self, input: &[S]) -> Vec<Vec<S>> {
        let mut outputs = Vec::with_capacity(self.weights.len());
        let mut current = input.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = vec![S::zero(); w.rows()];
            w.matvec(&current, &mut next);
            for (v, bias) in next.iter_mut().zip(b) {
                *v += *bias;
                if l < last {
                    *v = self.activation.apply(*v);
                }
            }
            outputs.push(next.clone());
            current = next;
        }
        outputs
    }

    fn forward(&self, input: &[S]) -> Vec<S> {
        self.forward_trace(input).pop().expect("at least one layer")
    }

    /// Mean over the batch of the squared-error loss summed over outputs;
    /// gradients are accumulated into `grad_w` / `grad_b`.
    fn loss_and_gradients(
        &self,
        rows: &[Vec<S>],
        targets: &[&[S]],
        grad_w: &mut [Mat<S>],
        grad_b: &mut [Vec<S>],
    ) -> S {
        for g in grad_w.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v = S::zero());
        }
        for g in grad_b.iter_mut() {
            g.iter_mut().for_each(|v| *v = S::zero());
        }
        let batch = S::cast_from(rows.len() as f64);
        let mut loss = S::zero();
        let last = self.weights.len() - 1;
        for (row, target) in rows.iter().zip(targets) {
            let outputs = self.forward_trace(row);
            let prediction = &outputs[last];
            // d(loss)/d(prediction) for loss = mean over batch of
            // sum_j (p_j - t_j)^2 / H.
            let h_norm = S::cast_from(prediction.len() as f64);
            let mut delta: Vec<S> = prediction
                .iter()
                .zip(*target)
                .map(|(p, t)| {
                    let e = *p - *t;
                    loss += e * e / (h_norm * batch);
                    S::cast_from(2.0) * e / (h_norm * batch)
                })
                .collect();
            for l in (0..=last).rev() {
                let upstream: &[S] = if l == 0 { row } else { &outputs[l - 1] };
                grad_w[l].add_outer(S::one(), &delta, upstream);
                for (g, d) in grad_b[l].iter_mut().zip(&delta) {
                    *g += *d;
                }
                if l > 0 {
                    let mut prev = vec![S::zero(); self.weights[l].cols()];
                    self.weights[l].matvec_t(&delta, &mut prev);
                    for (p, a) in prev.iter_mut().zip(&outputs[l - 1]) {
                        *p *= self.activation.derivative_from_output(*a);
                    }
                    delta = prev;
                }
            }
        }
        loss
    }

    pub fn fit(
        config: &HyperparamConfig,
        windows: &SupervisedWindowSet<S>,
        seed: u64,
    ) -> Result<Self, ForecasterError> {
        let activation = Activation::parse(cat_param(config, "activation")?)?;
        let batch_size: usize = cat_param(config, "batch_size")?
            .parse()
            .map_err(|_| ForecasterError::InvalidConfig("batch_size must be an integer".into()))?;
        let n = windows.len();
        let d = windows.input_dim();
        let h = windows.horizon();
        let sizes = Self::layer_sizes(config, d, h)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (weights, biases) = Self::new_random(&sizes, &mut rng);
        let mut model = MlpModel {
            input_dim: d,
            horizon: h,
            activation,
            weights,
            biases,
            warnings: Vec::new(),
        };

        let rows: Vec<Vec<S>> = (0..n).map(|i| windows.input_row(i)).collect();
        let targets: Vec<&[S]> = windows.samples().iter().map(|s| &s.target[..]).collect();

        // Seeded 20% hold-out for early stopping (at least one window each).
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_holdout = ((n as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, n - 1);
        let (holdout_idx, train_idx) = order.split_at(n_holdout);

        let mut velocity_w: Vec<Mat<S>> = model
            .weights
            .iter()
            .map(|w| Mat::zeros(w.rows(), w.cols()))
            .collect();
        let mut velocity_b: Vec<Vec<S>> = model.biases.iter().map(|b| vec![S::zero(); b.len()]).collect();
        let mut grad_w = velocity_w.clone();
        let mut grad_b = velocity_b.clone();

        let holdout_rows: Vec<Vec<S>> = holdout_idx.iter().map(|&i| rows[i].clone()).collect();
        let holdout_targets: Vec<&[S]> = holdout_idx.iter().map(|&i| targets[i]).collect();
        let holdout_loss = |m: &MlpModel<S>| -> S {
            let mut total = S::zero();
            for (row, target) in holdout_rows.iter().zip(&holdout_targets) {
                let pred = m.forward(row);
                for (p, t) in pred.iter().zip(*target) {
                    total += (*p - *t) * (*p - *t);
                }
            }
            total / S::cast_from((holdout_rows.len() * h) as f64)
        };

        let lr = S::cast_from(LEARNING_RATE);
        let momentum = S::cast_from(MOMENTUM);
        let mut best_loss = holdout_loss(&model);
        let mut best_weights = (model.weights.clone(), model.biases.clone());
        let mut epochs_since_best = 0usize;
        let mut stopped_early = false;
        let mut batch_order: Vec<usize> = train_idx.to_vec();
        'training: for epoch in 0..MAX_EPOCHS {
            let mut epoch_rng =
                ChaCha12Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xd134_2543));
            batch_order.shuffle(&mut epoch_rng);
            for chunk in batch_order.chunks(batch_size.min(batch_order.len())) {
                let batch_rows: Vec<Vec<S>> = chunk.iter().map(|&i| rows[i].clone()).collect();
                let batch_targets: Vec<&[S]> = chunk.iter().map(|&i| targets[i]).collect();
                let loss =
                    model.loss_and_gradients(&batch_rows, &batch_targets, &mut grad_w, &mut grad_b);
                if !loss.is_finite() {
                    model.warnings.push(
                        "training loss became non-finite; restored best hold-out weights".into(),
                    );
                    stopped_early = true;
                    break 'training;
                }
                for l in 0..model.weights.len() {
                    for (v, g) in velocity_w[l]
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad_w[l].as_slice())
                    {
                        *v = momentum * *v - lr * *g;
                    }
                    for (w, v) in model.weights[l]
                        .as_mut_slice()
                        .iter_mut()
                        .zip(velocity_w[l].as_slice())
                    {
                        *w += *v;
                    }
                    for (v, g) in velocity_b[l].iter_mut().zip(&grad_b[l]) {
                        *v = momentum * *v - lr * *g;
                    }
                    for (b, v) in model.biases[l].iter_mut().zip(&velocity_b[l]) {
                        *b += *v;
                    }
                }
            }
            let val = holdout_loss(&model);
            if val < best_loss {
                best_loss = val;
                best_weights = (model.weights.clone(), model.biases.clone());
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= PATIENCE {
                    stopped_early = true;
                    break;
                }
            }
        }
        if !stopped_early {
            model.warnings.push(format!(
                "hold-out loss still improving after {MAX_EPOCHS} epochs; training may not have converged"
            ));
        }
        model.weights = best_weights.0;
        model.biases = best_weights.1;
        Ok(model)
    }
}

impl<S: Scalar> PointModel<S> for MlpModel<S> {
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
            values.extend(self.forward(&windows.input_row(i)));
        }
        Ok(PointForecast::new(
            windows.origins(),
            windows.origin_timestamps(),
            self.horizon,
            values,
        )?)
    }

    fn warnings(&self) -> &[String] {
        &self.warnings
    }
}
