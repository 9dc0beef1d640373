//! Gradient-boosted regression trees with exhaustive squared-error splits.
//!
//! One independent ensemble per horizon step. Trees are grown greedily to a
//! depth limit; every (feature, midpoint-threshold) pair is scored by the
//! post-split sum of squared errors. Row subsampling per tree is seeded and
//! without replacement.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{int_param, real_param, ForecasterError, PointModel};
use crate::data::SupervisedWindowSet;
use crate::forecast::PointForecast;
use crate::scalar::Scalar;
use crate::space::HyperparamConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node<S> {
    Leaf {
        value: S,
    },
    Split {
        feature: usize,
        threshold: S,
        left: Box<Node<S>>,
        right: Box<Node<S>>,
    },
}

impl<S: Scalar> Node<S> {
    fn eval(&self, row: &[S]) -> S {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.eval(row)
                } else {
                    right.eval(row)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel<S> {
    input_dim: usize,
    horizon: usize,
    learning_rate: S,
    /// `base[step]` is the training-target mean; `trees[step]` the boosted
    /// residual trees for that step.
    base: Vec<S>,
    trees: Vec<Vec<Node<S>>>,
}

struct TreeParams {
    max_depth: usize,
}

/// Grow one regression tree on (rows, residuals) restricted to `idx`.
fn grow_tree<S: Scalar>(
    rows: &[Vec<S>],
    residuals: &[S],
    idx: &mut [usize],
    depth: usize,
    params: &TreeParams,
) -> Node<S> {
    let n = idx.len();
    let mean = idx.iter().map(|&i| residuals[i]).sum::<S>() / S::cast_from(n as f64);
    if depth >= params.max_depth || n < 2 {
        return Node::Leaf { value: mean };
    }
    let parent_sse = idx
        .iter()
        .map(|&i| (residuals[i] - mean) * (residuals[i] - mean))
        .sum::<S>();

    let d = rows[0].len();
    let mut best: Option<(usize, S, S)> = None; // (feature, threshold, sse)
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for feature in 0..d {
        order.clear();
        order.extend_from_slice(idx);
        order.sort_by(|&a, &b| {
            rows[a][feature]
                .partial_cmp(&rows[b][feature])
                .expect("finite feature values")
        });
        // Prefix sums over the sorted residuals let each cut be scored in
        // O(1): SSE_L + SSE_R = sum(r^2) - sumL^2/nL - sumR^2/nR.
        let total_sum = order.iter().map(|&i| residuals[i]).sum::<S>();
        let total_sq = order.iter().map(|&i| residuals[i] * residuals[i]).sum::<S>();
        let mut left_sum = S::zero();
        for cut in 1..n {
            let prev = order[cut - 1];
            left_sum += residuals[prev];
            let (lo, hi) = (rows[prev][feature], rows[order[cut]][feature]);
            if lo == hi {
                continue;
            }
            let n_l = S::cast_from(cut as f64);
            let n_r = S::cast_from((n - cut) as f64);
            let right_sum = total_sum - left_sum;
            let sse = total_sq - left_sum * left_sum / n_l - right_sum * right_sum / n_r;
            let better = match &best {
                None => true,
                Some((_, _, b)) => sse < *b,
            };
            if better {
                best = Some((feature, (lo + hi) / S::cast_from(2.0), sse));
            }
        }
    }
    match best {
        Some((feature, threshold, sse)) if sse < parent_sse - S::cast_from(1e-12) => {
            let mid = itertools_partition(idx, |&i| rows[i][feature] <= threshold);
            let (left_idx, right_idx) = idx.split_at_mut(mid);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow_tree(rows, residuals, left_idx, depth + 1, params)),
                right: Box::new(grow_tree(rows, residuals, right_idx, depth + 1, params)),
            }
        }
        _ => Node::Leaf { value: mean },
    }
}

/// Stable partition: moves elements satisfying `pred` to the front,
/// returning the boundary. Order within each side is preserved so tree
/// growth is deterministic.
fn itertools_partition<T: Copy>(xs: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut front: Vec<T> = Vec::with_capacity(xs.len());
    let mut back: Vec<T> = Vec::new();
    for &x in xs.iter() {
        if pred(&x) {
            front.push(x);
        } else {
            back.push(x);
        }
    }
    let mid = front.len();
    xs[..mid].copy_from_slice(&front);
    xs[mid..].copy_from_slice(&back);
    mid
}

impl<S: Scalar> GbtModel<S> {
    pub fn fit(
        config: &HyperparamConfig,
        windows: &SupervisedWindowSet<S>,
        seed: u64,
    ) -> Result<Self, ForecasterError> {
        let learning_rate = real_param(config, "learning_rate")?;
        let max_depth = int_param(config, "max_depth")? as usize;
        let n_estimators = int_param(config, "n_estimators")? as usize;
        let sub_sample = real_param(config, "sub_sample")?;
        if !(0.0 < sub_sample && sub_sample <= 1.0) {
            return Err(ForecasterError::InvalidConfig(
                "sub_sample must lie in (0, 1]".into(),
            ));
        }
        let n = windows.len();
        let h = windows.horizon();
        let rows: Vec<Vec<S>> = (0..n).map(|i| windows.input_row(i)).collect();
        let params = TreeParams { max_depth };
        let n_sub = ((sub_sample * n as f64).ceil() as usize).clamp(1, n);

        let mut base = Vec::with_capacity(h);
        let mut trees = Vec::with_capacity(h);
        let lr = S::cast_from(learning_rate);
        for step in 0..h {
            let targets: Vec<S> = windows
                .samples()
                .iter()
                .map(|sample| sample.target[step])
                .collect();
            let mean = targets.iter().copied().sum::<S>() / S::cast_from(n as f64);
            let mut pred = vec![mean; n];
            let mut step_trees = Vec::with_capacity(n_estimators);
            let mut rng =
                ChaCha12Rng::seed_from_u64(seed ^ (step as u64).wrapping_mul(0x9e37_79b9));
            let mut residuals = vec![S::zero(); n];
            for _ in 0..n_estimators {
                for i in 0..n {
                    residuals[i] = targets[i] - pred[i];
                }
                let mut idx: Vec<usize> = (0..n).collect();
                if n_sub < n {
                    idx.shuffle(&mut rng);
                    idx.truncate(n_sub);
                    idx.sort_unstable();
                }
                let tree = grow_tree(&rows, &residuals, &mut idx, 0, &params);
                for i in 0..n {
                    pred[i] += lr * tree.eval(&rows[i]);
                }
                step_trees.push(tree);
            }
            base.push(mean);
            trees.push(step_trees);
        }
        Ok(GbtModel {
            input_dim: windows.input_dim(),
            horizon: h,
            learning_rate: lr,
            base,
            trees,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }
}

impl<S: Scalar> PointModel<S> for GbtModel<S> {
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
                let mut acc = self.base[step];
                for tree in &self.trees[step] {
                    acc += self.learning_rate * tree.eval(&row);
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
