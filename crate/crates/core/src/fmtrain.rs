//! Training a single flow-matching block.
//!
//! Each batch draws left endpoints from the pool, right endpoints from the
//! supplied sampler, one Beta time per sample, and regresses the network onto
//! the interpolant's time derivative with one Adam step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::app::seeds::{stream, stream_rng};
use crate::error::{Error, Result};
use crate::flowmath::{interp_deriv_into, interp_into, InterpolantKind, TimeSampler};
use crate::netcore::{MlpSpec, ParamVector, VelocityField};
use crate::samples::Samples;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate is multiplied by this every `decay_every` updates.
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl AdamConfig {
    pub fn new(lr: f64, decay_factor: f64, decay_every: u64) -> Result<Self> {
        let cfg = AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor,
            decay_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning_rate", format!("{} must be positive", self.lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid(
                "lr_decay_factor",
                format!("{} must lie in (0, 1]", self.decay_factor),
            ));
        }
        if self.decay_every == 0 {
            return Err(Error::invalid("lr_decay_every", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("adam eps", "must be positive"));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 1.0,
            decay_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: ParamVector::zeros(len),
            v: ParamVector::zeros(len),
            step: 0,
        }
    }

    /// Learning rate that the next update will use.
    pub fn effective_lr(&self, cfg: &AdamConfig) -> f64 {
        let periods = self.step / cfg.decay_every;
        cfg.lr * cfg.decay_factor.powi(periods.min(i32::MAX as u64) as i32)
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParamVector, grad: &ParamVector, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n = params.len();
    for (what, len) in [("gradient", grad.len()), ("adam m", state.m.len()), ("adam v", state.v.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let lr = state.effective_lr(cfg);
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
    let p = params.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (i, &g) in grad.as_slice().iter().enumerate() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub n_batches: usize,
    pub interpolant: InterpolantKind,
    pub time_sampler: TimeSampler,
    pub seed: u64,
}

impl BlockTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.n_batches == 0 {
            return Err(Error::invalid("batches_per_block", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sampler for right endpoints: given the block's batch rng and a batch size,
/// produce that many points.
pub trait EndpointSampler {
    fn sample(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Result<Samples>;
}

impl<F> EndpointSampler for F
where
    F: FnMut(&mut ChaCha8Rng, usize) -> Result<Samples>,
{
    fn sample(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Result<Samples> {
        self(rng, n)
    }
}

/// Train one block from scratch; returns the field and per-batch losses.
pub fn train_block<S: EndpointSampler>(
    left_pool: &Samples,
    right_sampler: S,
    spec: &MlpSpec,
    cfg: &BlockTrainConfig,
) -> Result<(VelocityField, Vec<f64>)> {
    let mut init_rng = stream_rng(cfg.seed, stream::INIT);
    let field = VelocityField::init(spec.clone(), &mut init_rng)?;
    continue_block(field, left_pool, right_sampler, cfg)
}

/// Train an existing field further with fresh optimizer state.
pub fn continue_block<S: EndpointSampler>(
    mut field: VelocityField,
    left_pool: &Samples,
    mut right_sampler: S,
    cfg: &BlockTrainConfig,
) -> Result<(VelocityField, Vec<f64>)> {
    cfg.validate()?;
    if left_pool.is_empty() {
        return Err(Error::Empty("left sample pool"));
    }
    let d = field.dim();
    if left_pool.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "left pool dimension",
            expected: d,
            actual: left_pool.dim(),
        });
    }
    let mut rng = stream_rng(cfg.seed, stream::BATCHES);
    let b = cfg.batch_size;
    let mut state = AdamState::new(field.params().len());
    let mut grad = ParamVector::zeros(field.params().len());
    let mut history = Vec::with_capacity(cfg.n_batches);
    let mut phi = vec![0.0; b * d];
    let mut target = vec![0.0; b * d];
    let mut ts = vec![0.0; b];
    let mut idx = vec![0usize; b];
    for batch in 0..cfg.n_batches {
        for i in idx.iter_mut() {
            *i = rng.gen_range(0..left_pool.len());
        }
        let x_r = right_sampler.sample(&mut rng, b)?;
        if x_r.dim() != d || x_r.len() != b {
            return Err(Error::DimensionMismatch {
                what: "right endpoint batch (rows × dim)",
                expected: b * d,
                actual: x_r.len() * x_r.dim(),
            });
        }
        for t in ts.iter_mut() {
            *t = cfg.time_sampler.sample(&mut rng);
        }
        for (i, &j) in idx.iter().enumerate() {
            let xl = left_pool.row(j);
            let xr = x_r.row(i);
            interp_into(cfg.interpolant, ts[i], xl, xr, &mut phi[i * d..(i + 1) * d]);
            interp_deriv_into(cfg.interpolant, ts[i], xl, xr, &mut target[i * d..(i + 1) * d]);
        }
        let loss = field.loss_and_grad_into(&phi, &ts, &target, &mut grad)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::NonFinite(format!("training loss at batch {batch}")));
        }
        history.push(loss);
        adam_step(field.params_mut(), &grad, &mut state, &cfg.adam)?;
    }
    if !field.params().all_finite() {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok((field, history))
}
