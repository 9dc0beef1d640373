//! Conditional invertible neural network mapping forecast windows to a
//! Gaussian latent space, plus quantile generation by latent-neighborhood
//! sampling.
//!
//! The flow is a stack of conditional affine coupling blocks. Each block
//! applies a seeded channel permutation, transforms the second half of the
//! channels by `v2' = v2 * exp(s_hat) + t` where the soft-clamped log-scale
//! `s_hat = alpha * tanh(s/alpha)` and shift `t` come from two-layer subnets
//! fed with the first half and an encoded condition, then undoes the
//! permutation. Subnet output layers start at zero, so a freshly initialized
//! model is exactly the identity with log-determinant 0.
//!
//! Training minimizes the exact negative log-likelihood
//! `||z||^2 / 2 - log|det J| + (D/2) ln(2 pi)` by momentum SGD with manual
//! backpropagation; gradients are available for finite-difference checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SupervisedWindowSet;
use crate::forecast::{quantile_of_sorted, ForecastError, PointForecast, QuantileForecast};
use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CinnError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid sampling configuration: {0}")]
    BadSampling(String),
    #[error("parameter vector has length {got}, model has {want}")]
    ParameterShape { want: usize, got: usize },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// Two-layer fully connected subnet: input -> hidden (ReLU) -> output.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubNet<S> {
    w1: Mat<S>,
    b1: Vec<S>,
    w2: Mat<S>,
    b2: Vec<S>,
}

impl<S: Scalar> SubNet<S> {
    /// Hidden layer seeded Glorot-uniform, output layer zero so the block
    /// starts as the identity.
    fn zero_output(input: usize, hidden: usize, output: usize, rng: &mut ChaCha12Rng) -> Self {
        let bound = (6.0 / (input + hidden) as f64).sqrt();
        let mut w1 = Mat::zeros(hidden, input);
        for v in w1.as_mut_slice() {
            *v = S::cast_from(rng.gen_range(-bound..bound));
        }
        SubNet {
            w1,
            b1: vec![S::zero(); hidden],
            w2: Mat::zeros(output, hidden),
            b2: vec![S::zero(); output],
        }
    }

    /// Returns (hidden activations after ReLU, output).
    fn forward(&self, input: &[S]) -> (Vec<S>, Vec<S>) {
        let mut hidden = vec![S::zero(); self.w1.rows()];
        self.w1.matvec(input, &mut hidden);
        for (h, b) in hidden.iter_mut().zip(&self.b1) {
            *h += *b;
            if *h < S::zero() {
                *h = S::zero();
            }
        }
        let mut out = vec![S::zero(); self.w2.rows()];
        self.w2.matvec(&hidden, &mut out);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += *b;
        }
        (hidden, out)
    }

    /// Accumulate parameter gradients for upstream gradient `dout`; adds the
    /// gradient with respect to the input into `dinput`.
    fn backward(
        &self,
        input: &[S],
        hidden: &[S],
        dout: &[S],
        grad: &mut SubNet<S>,
        dinput: &mut [S],
    ) {
        grad.w2.add_outer(S::one(), dout, hidden);
        for (g, d) in grad.b2.iter_mut().zip(dout) {
            *g += *d;
        }
        let mut dhidden = vec![S::zero(); hidden.len()];
        self.w2.matvec_t(dout, &mut dhidden);
        for (d, h) in dhidden.iter_mut().zip(hidden) {
            if *h <= S::zero() {
                *d = S::zero();
            }
        }
        grad.w1.add_outer(S::one(), &dhidden, input);
        for (g, d) in grad.b1.iter_mut().zip(&dhidden) {
            *g += *d;
        }
        let mut dx = vec![S::zero(); input.len()];
        self.w1.matvec_t(&dhidden, &mut dx);
        for (acc, d) in dinput.iter_mut().zip(&dx) {
            *acc += *d;
        }
    }

    fn zeros_like(&self) -> Self {
        SubNet {
            w1: Mat::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![S::zero(); self.b1.len()],
            w2: Mat::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![S::zero(); self.b2.len()],
        }
    }

    fn n_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    fn write_params(&self, out: &mut Vec<S>) {
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
    }

    fn read_params(&mut self, src: &[S], pos: &mut usize) {
        for v in self.w1.as_mut_slice() {
            *v = src[*pos];
            *pos += 1;
        }
        for v in self.b1.iter_mut() {
            *v = src[*pos];
            *pos += 1;
        }
        for v in self.w2.as_mut_slice() {
            *v = src[*pos];
            *pos += 1;
        }
        for v in self.b2.iter_mut() {
            *v = src[*pos];
            *pos += 1;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CouplingBlock<S> {
    /// Channel permutation applied at block entry (`v[j] = u[perm[j]]`) and
    /// undone at exit, so a zero-output block is the identity end to end.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    s_net: SubNet<S>,
    t_net: SubNet<S>,
}

const MODEL_VERSION: u32 = 1;

/// The flow. Operates on windows padded to an even channel count; odd
/// horizons gain one zero channel that the inverse drops again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CinnModel<S> {
    version: u32,
    h: usize,
    h_pad: usize,
    raw_cond_dim: usize,
    cond_dim: usize,
    n_blocks: usize,
    hidden_width: usize,
    alpha: f64,
    seed: u64,
    encoder: Mat<S>,
    blocks: Vec<CouplingBlock<S>>,
    trained: bool,
}

/// Training options for [`train_cinn`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            batch: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

const MOMENTUM: f64 = 0.9;
const GRAD_CLIP: f64 = 5.0;

/// Latent sampling configuration: standard deviation around the encoded
/// point forecast, sample count, and the quantile levels to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub sigma: f64,
    pub m: usize,
    pub levels: Vec<f64>,
}

impl SamplingConfig {
    pub fn new(sigma: f64, m: usize, levels: Vec<f64>) -> Result<Self, CinnError> {
        if !(sigma >= 0.0) {
            return Err(CinnError::BadSampling("sigma must be >= 0".into()));
        }
        if m < 2 {
            return Err(CinnError::BadSampling("need at least 2 samples".into()));
        }
        if levels.is_empty()
            || levels.windows(2).any(|w| w[0] >= w[1])
            || levels.iter().any(|l| !(0.0 < *l && *l < 1.0))
        {
            return Err(CinnError::BadSampling(
                "levels must be strictly increasing inside (0, 1)".into(),
            ));
        }
        Ok(SamplingConfig { sigma, m, levels })
    }

    /// Nine deciles 0.1..0.9 with 100 samples.
    pub fn deciles(sigma: f64) -> Self {
        SamplingConfig {
            sigma,
            m: 100,
            levels: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

/// Build a zero-initialized (identity) flow.
///
/// `raw_cond_dim` is the width of the raw condition vector; a fixed seeded
/// linear encoder maps it to `cond_dim` inputs shared by every subnet.
pub fn init_cinn<S: Scalar>(
    h: usize,
    raw_cond_dim: usize,
    cond_dim: usize,
    n_blocks: usize,
    hidden_width: usize,
    alpha: f64,
    seed: u64,
) -> Result<CinnModel<S>, CinnError> {
    if h < 1 {
        return Err(CinnError::InvalidDims("window length must be >= 1".into()));
    }
    if n_blocks < 1 {
        return Err(CinnError::InvalidDims("need at least one block".into()));
    }
    if raw_cond_dim < 1 || cond_dim < 1 {
        return Err(CinnError::InvalidDims(
            "condition dimensions must be >= 1".into(),
        ));
    }
    if hidden_width < 1 {
        return Err(CinnError::InvalidDims("hidden width must be >= 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(CinnError::InvalidDims("clamp bound must be > 0".into()));
    }
    let h_pad = h + (h % 2);
    let half = h_pad / 2;
    let mut enc_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5f3_1e2d);
    let bound = (6.0 / (raw_cond_dim + cond_dim) as f64).sqrt();
    let mut encoder = Mat::zeros(cond_dim, raw_cond_dim);
    for v in encoder.as_mut_slice() {
        *v = S::cast_from(enc_rng.gen_range(-bound..bound));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1 + b as u64));
        let mut perm: Vec<usize> = (0..h_pad).collect();
        perm.shuffle(&mut rng);
        let mut inv_perm = vec![0usize; h_pad];
        for (j, &p) in perm.iter().enumerate() {
            inv_perm[p] = j;
        }
        let s_net = SubNet::zero_output(half + cond_dim, hidden_width, half, &mut rng);
        let t_net = SubNet::zero_output(half + cond_dim, hidden_width, half, &mut rng);
        blocks.push(CouplingBlock {
            perm,
            inv_perm,
            s_net,
            t_net,
        });
    }
    Ok(CinnModel {
        version: MODEL_VERSION,
        h,
        h_pad,
        raw_cond_dim,
        cond_dim,
        n_blocks,
        hidden_width,
        alpha,
        seed,
        encoder,
        blocks,
        trained: false,
    })
}

/// Per-sample forward trace kept for backpropagation.
struct BlockTrace<S> {
    /// Block input after permutation, split halves.
    v2: Vec<S>,
    s_hidden: Vec<S>,
    s_raw: Vec<S>,
    s_hat: Vec<S>,
    t_hidden: Vec<S>,
    subnet_input: Vec<S>,
}

impl<S: Scalar> CinnModel<S> {
    pub fn horizon(&self) -> usize {
        self.h
    }

    /// Latent dimension: the horizon padded to an even channel count.
    pub fn latent_dim(&self) -> usize {
        self.h_pad
    }

    pub fn raw_condition_dim(&self) -> usize {
        self.raw_cond_dim
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Constant term of the NLL: `(D/2) ln(2 pi)`.
    pub fn nll_constant(&self) -> f64 {
        self.h_pad as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln()
    }

    fn encode(&self, raw_cond: &[S]) -> Result<Vec<S>, CinnError> {
        if raw_cond.len() != self.raw_cond_dim {
            return Err(CinnError::DimMismatch(format!(
                "condition has {} entries, model expects {}",
                raw_cond.len(),
                self.raw_cond_dim
            )));
        }
        let mut e = vec![S::zero(); self.cond_dim];
        self.encoder.matvec(raw_cond, &mut e);
        Ok(e)
    }

    fn pad_input(&self, y: &[S]) -> Result<Vec<S>, CinnError> {
        if y.len() != self.h {
            return Err(CinnError::DimMismatch(format!(
                "window has {} entries, model expects {}",
                y.len(),
                self.h
            )));
        }
        let mut x = y.to_vec();
        x.resize(self.h_pad, S::zero());
        Ok(x)
    }

    fn soft_clamp(&self, s_raw: S) -> S {
        let a = S::cast_from(self.alpha);
        a * (s_raw / a).tanh()
    }

    /// Forward pass. Returns the latent vector (length [`Self::latent_dim`])
    /// and the log-determinant of the Jacobian.
    pub fn forward(&self, y: &[S], raw_cond: &[S]) -> Result<(Vec<S>, S), CinnError> {
        let (z, logdet, _) = self.forward_internal(y, raw_cond, false)?;
        Ok((z, logdet))
    }

    fn forward_internal(
        &self,
        y: &[S],
        raw_cond: &[S],
        keep_trace: bool,
    ) -> Result<(Vec<S>, S, Vec<BlockTrace<S>>), CinnError> {
        let cond = self.encode(raw_cond)?;
        let mut x = self.pad_input(y)?;
        let half = self.h_pad / 2;
        let mut logdet = S::zero();
        let mut traces = Vec::with_capacity(if keep_trace { self.n_blocks } else { 0 });
        for block in &self.blocks {
            let v: Vec<S> = block.perm.iter().map(|&p| x[p]).collect();
            let (v1, v2) = v.split_at(half);
            let mut subnet_input = Vec::with_capacity(half + self.cond_dim);
            subnet_input.extend_from_slice(v1);
            subnet_input.extend_from_slice(&cond);
            let (s_hidden, s_raw) = block.s_net.forward(&subnet_input);
            let (t_hidden, t) = block.t_net.forward(&subnet_input);
            let s_hat: Vec<S> = s_raw.iter().map(|&s| self.soft_clamp(s)).collect();
            let mut out = vec![S::zero(); self.h_pad];
            for (j, &val) in v1.iter().enumerate() {
                out[block.perm[j]] = val;
            }
            for j in 0..half {
                logdet += s_hat[j];
                out[block.perm[half + j]] = v2[j] * s_hat[j].exp() + t[j];
            }
            if keep_trace {
                traces.push(BlockTrace {

                    v2: v2.to_vec(),
                    s_hidden,
                    s_raw,
                    s_hat: s_hat.clone(),
                    t_hidden,
                    subnet_input,
                });
            }
            x = out;
        }
        Ok((x, logdet, traces))
    }

    /// Inverse pass: latent (length [`Self::latent_dim`]) back to a window
    /// of length [`Self::horizon`]; the pad channel, if any, is dropped.
    pub fn inverse(&self, z: &[S], raw_cond: &[S]) -> Result<Vec<S>, CinnError> {
        if z.len() != self.h_pad {
            return Err(CinnError::DimMismatch(format!(
                "latent has {} entries, model expects {}",
                z.len(),
                self.h_pad
            )));
        }
        let cond = self.encode(raw_cond)?;
        let half = self.h_pad / 2;
        let mut x = z.to_vec();
        for block in self.blocks.iter().rev() {
            let v: Vec<S> = block.perm.iter().map(|&p| x[p]).collect();
            let (v1, v2p) = v.split_at(half);
            let mut subnet_input = Vec::with_capacity(half + self.cond_dim);
            subnet_input.extend_from_slice(v1);
            subnet_input.extend_from_slice(&cond);
            let (_, s_raw) = block.s_net.forward(&subnet_input);
            let (_, t) = block.t_net.forward(&subnet_input);
            let mut out = vec![S::zero(); self.h_pad];
            for (j, &val) in v1.iter().enumerate() {
                out[block.perm[j]] = val;
            }
            for j in 0..half {
                let s_hat = self.soft_clamp(s_raw[j]);
                out[block.perm[half + j]] = (v2p[j] - t[j]) * (-s_hat).exp();
            }
            x = out;
        }
        x.truncate(self.h);
        Ok(x)
    }

    pub fn n_params(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.s_net.n_params() + b.t_net.n_params())
            .sum()
    }

    /// Flattened trainable parameters (subnets only; the condition encoder
    /// and permutations are fixed).
    pub fn parameters(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n_params());
        for block in &self.blocks {
            block.s_net.write_params(&mut out);
            block.t_net.write_params(&mut out);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[S]) -> Result<(), CinnError> {
        if params.len() != self.n_params() {
            return Err(CinnError::ParameterShape {
                want: self.n_params(),
                got: params.len(),
            });
        }
        let mut pos = 0;
        for block in &mut self.blocks {
            block.s_net.read_params(params, &mut pos);
            block.t_net.read_params(params, &mut pos);
        }
        Ok(())
    }

    /// Mean NLL of a batch, including the `(D/2) ln(2 pi)` constant.
    pub fn nll_batch(&self, ys: &[&[S]], conds: &[&[S]]) -> Result<S, CinnError> {
        let mut total = S::zero();
        for (y, cond) in ys.iter().zip(conds) {
            let (z, logdet) = self.forward(y, cond)?;
            let half_sq = z.iter().map(|&v| v * v).sum::<S>() / S::cast_from(2.0);
            total += half_sq - logdet;
        }
        Ok(total / S::cast_from(ys.len() as f64) + S::cast_from(self.nll_constant()))
    }

    /// Mean NLL over the batch and its gradient with respect to
    /// [`Self::parameters`].
    pub fn nll_gradient(&self, ys: &[&[S]], conds: &[&[S]]) -> Result<(S, Vec<S>), CinnError> {
        let half = self.h_pad / 2;
        let inv_batch = S::one() / S::cast_from(ys.len() as f64);
        let mut grads: Vec<(SubNet<S>, SubNet<S>)> = self
            .blocks
            .iter()
            .map(|b| (b.s_net.zeros_like(), b.t_net.zeros_like()))
            .collect();
        let mut total = S::zero();
        for (y, cond) in ys.iter().zip(conds) {
            let (z, logdet, traces) = self.forward_internal(y, cond, true)?;
            let half_sq = z.iter().map(|&v| v * v).sum::<S>() / S::cast_from(2.0);
            total += half_sq - logdet;
            // dL/dz for the per-sample loss ||z||^2/2 - logdet, scaled by
            // the batch mean afterwards.
            let mut dx: Vec<S> = z.iter().map(|&v| v * inv_batch).collect();
            for bi in (0..self.n_blocks).rev() {
                let block = &self.blocks[bi];
                let trace = &traces[bi];
                // Undo the exit permutation: gradients of the block output
                // in (v1, v2') layout.
                let dout: Vec<S> = (0..self.h_pad).map(|j| dx[block.perm[j]]).collect();
                let (dout_v1, dout_v2p) = dout.split_at(half);
                let mut dv1 = dout_v1.to_vec();
                let mut dv2 = vec![S::zero(); half];
                let mut ds_hat = vec![S::zero(); half];
                let mut dt = vec![S::zero(); half];
                for j in 0..half {
                    let e = trace.s_hat[j].exp();
                    dv2[j] = dout_v2p[j] * e;
                    // logdet contributes -1 * inv_batch to each s_hat.
                    ds_hat[j] = dout_v2p[j] * trace.v2[j] * e - inv_batch;
                    dt[j] = dout_v2p[j];
                }
                // Soft clamp backward: d s_hat / d s_raw = 1 - tanh^2(s/a).
                let a = S::cast_from(self.alpha);
                let ds_raw: Vec<S> = ds_hat
                    .iter()
                    .zip(&trace.s_raw)
                    .map(|(&d, &s)| {
                        let th = (s / a).tanh();
                        d * (S::one() - th * th)
                    })
                    .collect();
                let (s_grad, t_grad) = &mut grads[bi];
                let mut dsubnet_input = vec![S::zero(); trace.subnet_input.len()];
                block.s_net.backward(
                    &trace.subnet_input,
                    &trace.s_hidden,
                    &ds_raw,
                    s_grad,
                    &mut dsubnet_input,
                );
                block.t_net.backward(
                    &trace.subnet_input,
                    &trace.t_hidden,
                    &dt,
                    t_grad,
                    &mut dsubnet_input,
                );
                for (acc, d) in dv1.iter_mut().zip(&dsubnet_input[..half]) {
                    *acc += *d;
                }
                // Re-apply the entry permutation to reach the block input.
                let mut dinput = vec![S::zero(); self.h_pad];
                for j in 0..half {
                    dinput[block.perm[j]] = dv1[j];
                    dinput[block.perm[half + j]] = dv2[j];
                }
                dx = dinput;
            }
        }
        let mean = total * inv_batch + S::cast_from(self.nll_constant());
        let mut flat = Vec::with_capacity(self.n_params());
        for (s_grad, t_grad) in &grads {
            s_grad.write_params(&mut flat);
            t_grad.write_params(&mut flat);
        }
        Ok((mean, flat))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CinnError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CinnError::Parse(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CinnError::Parse("missing version".into()))? as u32;
        if version != MODEL_VERSION {
            return Err(CinnError::Version(version));
        }
        serde_json::from_value(value).map_err(|e| CinnError::Parse(e.to_string()))
    }
}

/// Train the flow by momentum SGD on the exact NLL. Returns the trained
/// model and the per-epoch mean training loss.
pub fn train_cinn<S: Scalar>(
    mut model: CinnModel<S>,
    windows: &SupervisedWindowSet<S>,
    opts: &TrainOptions,
) -> Result<(CinnModel<S>, Vec<f64>), CinnError> {
    if windows.is_empty() {
        return Err(CinnError::InvalidDims("no training windows".into()));
    }
    let n = windows.len();
    let targets: Vec<&[S]> = windows.samples().iter().map(|s| &s.target[..]).collect();
    let conds: Vec<&[S]> = windows.samples().iter().map(|s| &s.condition[..]).collect();

    let mut params = model.parameters();
    let mut velocity = vec![S::zero(); params.len()];
    let lr = S::cast_from(opts.lr);
    let momentum = S::cast_from(MOMENTUM);
    let mut trace = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..opts.epochs {
        let mut rng =
            ChaCha12Rng::seed_from_u64(opts.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(opts.batch.min(n)).enumerate() {
            let ys: Vec<&[S]> = chunk.iter().map(|&i| targets[i]).collect();
            let cs: Vec<&[S]> = chunk.iter().map(|&i| conds[i]).collect();
            let (loss, mut grad) = model.nll_gradient(&ys, &cs)?;
            if !loss.is_finite() {
                return Err(CinnError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let norm = grad.iter().map(|&g| g * g).sum::<S>().sqrt();
            let clip = S::cast_from(GRAD_CLIP);
            if norm > clip {
                let scale = clip / norm;
                for g in grad.iter_mut() {
                    *g *= scale;
                }
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = momentum * *v - lr * *g;
                *p += *v;
            }
            model.set_parameters(&params)?;
            epoch_loss += loss.cast_into();
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    if opts.epochs > 0 {
        model.trained = true;
    }
    Ok((model, trace))
}

/// Generate quantile forecasts from point forecasts by sampling a Gaussian
/// neighborhood of each encoded forecast in latent space.
///
/// Works on any model, trained or not; pipelines that require a trained flow
/// enforce [`CinnModel::is_trained`] themselves. The same `seed` yields the
/// same latent noise regardless of `sc.sigma`, so sweeps over sigma share
/// common random numbers.
pub fn quantiles_from_point<S: Scalar>(
    model: &CinnModel<S>,
    pf: &PointForecast<S>,
    conditions: &[Vec<S>],
    sc: &SamplingConfig,
    seed: u64,
) -> Result<QuantileForecast<S>, CinnError> {
    if pf.horizon() != model.h {
        return Err(CinnError::DimMismatch(format!(
            "forecast horizon {} does not match model horizon {}",
            pf.horizon(),
            model.h
        )));
    }
    if conditions.len() != pf.origins().len() {
        return Err(CinnError::DimMismatch(format!(
            "{} conditions for {} forecast origins",
            conditions.len(),
            pf.origins().len()
        )));
    }
    if sc.m < 2 {
        return Err(CinnError::BadSampling("need at least 2 samples".into()));
    }
    let h = model.h;
    let m = sc.m;
    let sigma = S::cast_from(sc.sigma);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5a4d_504c);
    let mut values = Vec::with_capacity(pf.origins().len() * h * sc.levels.len());
    let mut all_samples = Vec::with_capacity(pf.origins().len() * h * m);
    let mut cell = vec![vec![S::zero(); m]; h];
    for (i, cond) in conditions.iter().enumerate() {
        let (z_hat, _) = model.forward(pf.row(i), cond)?;
        for sample in 0..m {
            let z: Vec<S> = z_hat
                .iter()
                .map(|&zc| zc + sigma * S::std_normal(&mut rng))
                .collect();
            let y = model.inverse(&z, cond)?;
            for (step, &v) in y.iter().enumerate() {
                cell[step][sample] = v;
            }
        }
        for step_samples in cell.iter_mut() {
            step_samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
            for &level in &sc.levels {
                values.push(quantile_of_sorted(step_samples, level));
            }
            all_samples.extend_from_slice(step_samples);
        }
    }
    Ok(QuantileForecast::new(
        pf.origins().to_vec(),
        pf.origin_timestamps().to_vec(),
        h,
        sc.levels.clone(),
        values,
        Some((m, all_samples)),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_windows, FeatureSpec, TimeSeriesDataset};
    use chrono::NaiveDate;

    fn random_model(h: usize, raw_cond: usize, seed: u64) -> CinnModel<f64> {
        let mut model = init_cinn::<f64>(h, raw_cond, 6, 4, 8, 2.0, seed).unwrap();
        // Perturb all parameters so the flow is non-trivial.
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabc);
        let params: Vec<f64> = model
            .parameters()
            .iter()
            .map(|_| rng.gen_range(-0.4..0.4))
            .collect();
        model.set_parameters(&params).unwrap();
        model
    }

    fn random_vec(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn zero_init_model_is_the_identity_with_zero_logdet() {
        let model = init_cinn::<f64>(6, 5, 4, 8, 16, 2.0, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let y = random_vec(&mut rng, 6, 3.0);
            let c = random_vec(&mut rng, 5, 1.0);
            let (z, logdet) = model.forward(&y, &c).unwrap();
            assert_eq!(z, y, "zero-init forward must reproduce the input");
            assert_eq!(logdet, 0.0);
            assert_eq!(model.inverse(&z, &c).unwrap(), y);
        }
    }

    #[test]
    fn round_trip_is_exact_to_1e6_on_random_models() {
        let model = random_model(8, 7, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let y = random_vec(&mut rng, 8, 3.0);
            let c = random_vec(&mut rng, 7, 1.0);
            let (z, _) = model.forward(&y, &c).unwrap();
            let back = model.inverse(&z, &c).unwrap();
            for (a, b) in y.iter().zip(&back) {
                worst = worst.max((a - b).abs());
            }
            let again = model.forward(&back, &c).unwrap().0;
            for (a, b) in z.iter().zip(&again) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-6, "round-trip error {worst}");
    }

    #[test]
    fn odd_horizon_pads_to_even_and_inverse_drops_the_pad() {
        let model = init_cinn::<f64>(1, 5, 4, 2, 8, 2.0, 0).unwrap();
        assert_eq!(model.latent_dim(), 2);
        let (z, _) = model.forward(&[0.7], &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(z.len(), 2);
        let y = model.inverse(&z, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - 0.7).abs() < 1e-9);

        let trained = random_model(5, 5, 2);
        assert_eq!(trained.latent_dim(), 6);
        let y5 = [0.1, -0.4, 0.9, 0.0, 2.0];
        let c = [0.3, 0.1, -0.2, 0.5, 0.9];
        let (z, _) = trained.forward(&y5, &c).unwrap();
        let back = trained.inverse(&z, &c).unwrap();
        for (a, b) in y5.iter().zip(&back) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert!(matches!(
            init_cinn::<f64>(4, 5, 4, 0, 8, 2.0, 0),
            Err(CinnError::InvalidDims(_))
        ));
        assert!(matches!(
            init_cinn::<f64>(0, 5, 4, 2, 8, 2.0, 0),
            Err(CinnError::InvalidDims(_))
        ));
        let model = init_cinn::<f64>(4, 5, 4, 2, 8, 2.0, 0).unwrap();
        assert!(matches!(
            model.forward(&[0.0; 3], &[0.0; 5]),
            Err(CinnError::DimMismatch(_))
        ));
        assert!(matches!(
            model.forward(&[0.0; 4], &[0.0; 4]),
            Err(CinnError::DimMismatch(_))
        ));
        assert!(matches!(
            model.inverse(&[0.0; 3], &[0.0; 5]),
            Err(CinnError::DimMismatch(_))
        ));
    }

    /// Log-determinant against a finite-difference Jacobian, H <= 6.
    #[test]
    fn logdet_matches_a_finite_difference_jacobian() {
        for h in [2usize, 4, 6] {
            let model = random_model(h, 5, h as u64);
            let mut rng = ChaCha12Rng::seed_from_u64(31 + h as u64);
            for _ in 0..5 {
                let y = random_vec(&mut rng, h, 2.0);
                let c = random_vec(&mut rng, 5, 1.0);
                let (_, logdet) = model.forward(&y, &c).unwrap();
                let eps = 1e-6;
                let mut jac = Mat::<f64>::zeros(h, h);
                for col in 0..h {
                    let mut up = y.clone();
                    up[col] += eps;
                    let mut down = y.clone();
                    down[col] -= eps;
                    let zu = model.forward(&up, &c).unwrap().0;
                    let zd = model.forward(&down, &c).unwrap().0;
                    for row in 0..h {
                        *jac.get_mut(row, col) = (zu[row] - zd[row]) / (2.0 * eps);
                    }
                }
                let fd_logdet = lu_log_abs_det(&mut jac);
                assert!(
                    (logdet - fd_logdet).abs() < 1e-4,
                    "H={h}: analytic {logdet} vs finite-difference {fd_logdet}"
                );
            }
        }
    }

    /// Gaussian elimination log|det| used only as a test oracle.
    fn lu_log_abs_det(a: &mut Mat<f64>) -> f64 {
        let n = a.rows();
        let mut log_abs = 0.0;
        for k in 0..n {
            let mut piv = k;
            for r in k + 1..n {
                if a.get(r, k).abs() > a.get(piv, k).abs() {
                    piv = r;
                }
            }
            if piv != k {
                for c in 0..n {
                    let tmp = a.get(k, c);
                    *a.get_mut(k, c) = a.get(piv, c);
                    *a.get_mut(piv, c) = tmp;
                }
            }
            let pivot = a.get(k, k);
            log_abs += pivot.abs().ln();
            for r in k + 1..n {
                let f = a.get(r, k) / pivot;
                for c in k..n {
                    let v = a.get(r, c) - f * a.get(k, c);
                    *a.get_mut(r, c) = v;
                }
            }
        }
        log_abs
    }

    #[test]
    fn nll_gradient_matches_central_differences() {
        let mut model = random_model(4, 5, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let ys: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 4, 2.0)).collect();
        let cs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 5, 1.0)).collect();
        let ys_ref: Vec<&[f64]> = ys.iter().map(|v| &v[..]).collect();
        let cs_ref: Vec<&[f64]> = cs.iter().map(|v| &v[..]).collect();
        let (_, grad) = model.nll_gradient(&ys_ref, &cs_ref).unwrap();
        let params = model.parameters();
        let eps = 1e-5;
        // Spot-check a deterministic stride of parameters (every 17th) plus
        // the ends; checking all ~3k in a unit test is wasteful.
        let mut indices: Vec<usize> = (0..params.len()).step_by(17).collect();
        indices.push(params.len() - 1);
        for &idx in &indices {
            let mut p = params.clone();
            p[idx] += eps;
            model.set_parameters(&p).unwrap();
            let up = model.nll_batch(&ys_ref, &cs_ref).unwrap();
            p[idx] -= 2.0 * eps;
            model.set_parameters(&p).unwrap();
            let down = model.nll_batch(&ys_ref, &cs_ref).unwrap();
            let numeric = (up - down) / (2.0 * eps);
            let denom = numeric.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                (numeric - grad[idx]).abs() / denom < 1e-4,
                "param {idx}: numeric {numeric} vs analytic {}",
                grad[idx]
            );
        }
        model.set_parameters(&params).unwrap();
    }

    fn gaussian_windows(n: usize, h: usize, seed: u64) -> SupervisedWindowSet<f64> {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let len = n;
        let ds = TimeSeriesDataset {
            timestamps: (0..len)
                .map(|i| start + chrono::Duration::hours(i as i64))
                .collect(),
            target: (0..len).map(|_| f64::std_normal(&mut rng)).collect(),
            exo_names: vec![],
            exogenous: vec![],
            split: None,
        };
        let spec = FeatureSpec {
            lags: vec![],
            seasonal: false,
            workday: false,
            holidays: vec![],
        };
        build_windows(&ds, 0, h, &spec).unwrap()
    }

    #[test]
    fn training_iid_gaussian_data_approaches_the_entropy_bound() {
        let h = 4;
        let windows = gaussian_windows(2600, h, 13);
        let model = init_cinn::<f64>(
            h,
            windows.condition_dim(),
            8,
            4,
            16,
            2.0,
            1,
        )
        .unwrap();
        let opts = TrainOptions {
            epochs: 30,
            batch: 64,
            lr: 1e-3,
            seed: 5,
        };
        let (trained, trace) = train_cinn(model, &windows, &opts).unwrap();
        assert_eq!(trace.len(), 30);
        assert!(trained.is_trained());
        let optimum = h as f64 / 2.0 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        let initial = trace[0];
        let final_loss = *trace.last().unwrap();
        assert!(final_loss < initial, "loss must decrease: {trace:?}");
        // Data is already standard normal: the identity-initialized flow
        // starts at the optimum and must stay within 0.1 * H of it.
        assert!(
            (final_loss - optimum).abs() < 0.1 * h as f64,
            "final {final_loss} vs optimum {optimum}"
        );
    }

    #[test]
    fn zero_epochs_leave_the_model_untouched() {
        let windows = gaussian_windows(300, 4, 2);
        let model = init_cinn::<f64>(4, windows.condition_dim(), 8, 4, 16, 2.0, 1).unwrap();
        let before = model.parameters();
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        let (after, trace) = train_cinn(model, &windows, &opts).unwrap();
        assert!(trace.is_empty());
        assert_eq!(after.parameters(), before);
        assert!(!after.is_trained());
    }

    #[test]
    fn sigma_zero_collapses_all_quantiles_onto_the_point_forecast() {
        let model = random_model(4, 5, 23);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 6;
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let rows: Vec<f64> = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pf = PointForecast::new(
            (0..n).collect(),
            (0..n)
                .map(|i| start + chrono::Duration::hours(i as i64))
                .collect(),
            4,
            rows.clone(),
        )
        .unwrap();
        let conditions: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 5, 1.0)).collect();
        let sc = SamplingConfig::new(0.0, 16, vec![0.1, 0.5, 0.9]).unwrap();
        let qf = quantiles_from_point(&model, &pf, &conditions, &sc, 3).unwrap();
        for i in 0..n {
            for step in 0..4 {
                let cell = qf.cell(i, step);
                let point = rows[i * 4 + step];
                for q in cell {
                    assert!((q - point).abs() < 1e-5, "quantile {q} vs point {point}");
                }
                assert!(cell.last().unwrap() - cell.first().unwrap() < 1e-5);
            }
        }
    }

    #[test]
    fn identity_model_with_unit_sigma_reproduces_normal_quantiles() {
        // Identity flow, point forecast 0: samples are N(0, 1); the 0.159 and
        // 0.841 quantiles approach -1 and +1.
        let model = init_cinn::<f64>(2, 5, 4, 4, 8, 2.0, 7).unwrap();
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let pf = PointForecast::new(vec![0], vec![start], 2, vec![0.0, 0.0]).unwrap();
        let sc = SamplingConfig::new(1.0, 2000, vec![0.159, 0.841]).unwrap();
        let qf =
            quantiles_from_point(&model, &pf, &[vec![0.0; 5]], &sc, 1).unwrap();
        for step in 0..2 {
            let cell = qf.cell(0, step);
            assert!((cell[0] + 1.0).abs() < 0.1, "lower {})", cell[0]);
            assert!((cell[1] - 1.0).abs() < 0.1, "upper {}", cell[1]);
        }
    }

    #[test]
    fn mean_interval_width_grows_with_sigma() {
        let model = random_model(4, 5, 41);
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let n = 5;
        let pf = PointForecast::new(
            (0..n).collect(),
            (0..n)
                .map(|i| start + chrono::Duration::hours(i as i64))
                .collect(),
            4,
            (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let conditions: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 5, 1.0)).collect();
        for sample_seed in 0..5u64 {
            let mut last = 0.0f64;
            for sigma in [0.1, 0.5, 1.0, 2.0] {
                let sc = SamplingConfig::new(sigma, 500, vec![0.1, 0.9]).unwrap();
                let qf =
                    quantiles_from_point(&model, &pf, &conditions, &sc, sample_seed).unwrap();
                let mut width = 0.0;
                for i in 0..n {
                    for step in 0..4 {
                        let cell = qf.cell(i, step);
                        width += cell[1] - cell[0];
                    }
                }
                width /= (n * 4) as f64;
                assert!(
                    width >= last,
                    "sigma {sigma}: width {width} below previous {last}"
                );
                last = width;
            }
        }
    }

    #[test]
    fn quantile_rows_are_monotone_for_trained_models() {
        let model = random_model(3, 5, 77);
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let n = 8;
        let pf = PointForecast::new(
            (0..n).collect(),
            (0..n)
                .map(|i| start + chrono::Duration::hours(i as i64))
                .collect(),
            3,
            (0..n * 3).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let conditions: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 5, 1.0)).collect();
        let sc = SamplingConfig::new(0.7, 64, (1..=9).map(|i| i as f64 / 10.0).collect()).unwrap();
        // Construction via QuantileForecast::new would reject non-monotone
        // rows; reaching here at all is the property.
        let qf = quantiles_from_point(&model, &pf, &conditions, &sc, 4).unwrap();
        assert!(qf.has_samples());
        assert_eq!(qf.cell_samples(0, 0).unwrap().len(), 64);
    }

    #[test]
    fn checkpoint_round_trip_preserves_behaviour_and_version() {
        let model = random_model(4, 5, 3);
        let text = model.to_json();
        let back = CinnModel::<f64>::from_json(&text).unwrap();
        let y = [0.5, -0.3, 1.1, 0.0];
        let c = [0.2, 0.4, -0.6, 0.8, 0.0];
        let (z1, d1) = model.forward(&y, &c).unwrap();
        let (z2, d2) = back.forward(&y, &c).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(d1, d2);

        let mut tampered: serde_json::Value = serde_json::from_str(&text).unwrap();
        tampered["version"] = serde_json::json!(99);
        assert!(matches!(
            CinnModel::<f64>::from_json(&tampered.to_string()),
            Err(CinnError::Version(99))
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed_and_common_across_sigma() {
        let model = random_model(2, 5, 15);
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let pf = PointForecast::new(vec![0], vec![start], 2, vec![0.3, -0.2]).unwrap();
        let conds = vec![vec![0.1; 5]];
        let sc = SamplingConfig::new(0.5, 50, vec![0.25, 0.75]).unwrap();
        let a = quantiles_from_point(&model, &pf, &conds, &sc, 9).unwrap();
        let b = quantiles_from_point(&model, &pf, &conds, &sc, 9).unwrap();
        assert_eq!(a.values(), b.values());
        let c = quantiles_from_point(&model, &pf, &conds, &sc, 10).unwrap();
        assert_ne!(a.values(), c.values());
    }
}
