//! The block pipeline: sequential training, reverse-flow generation, exact
//! negative log-likelihood and residual-map distillation.
//!
//! Block `n` carries `p_{n−1}` to `p_n^* = (OU)_0^{γ_n} p_{n−1}` (to `q = N(0, I)`
//! for the final block). After a block is trained the whole pool is pushed
//! through it and becomes the next block's source.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::app::seeds::{derive_seed, stream};
use crate::error::{Error, Result};
use crate::flowmath::{ou_right_sample, standard_normal_samples, InterpolantKind, Schedule};
use crate::fmtrain::{train_block, BlockTrainConfig};
use crate::netcore::{MlpSpec, TimeFeatures, VelocityField};
use crate::odeint::{integrate_batch, integrate_batch_with_divergence, Direction, IntegratorConfig};
use crate::samples::Samples;

/// Points are processed in chunks of this many rows to bound memory.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SubFlow {
    pub field: VelocityField,
    pub gamma: f64,
    pub interpolant: InterpolantKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfmModel {
    dim: usize,
    blocks: Vec<SubFlow>,
    pub integrator: IntegratorConfig,
}

impl LfmModel {
    pub fn new(blocks: Vec<SubFlow>, integrator: IntegratorConfig) -> Result<Self> {
        let dim = blocks.first().ok_or(Error::Empty("model blocks"))?.field.dim();
        for b in &blocks {
            if b.field.dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "block dimension",
                    expected: dim,
                    actual: b.field.dim(),
                });
            }
            if !(b.gamma > 0.0 && b.gamma.is_finite()) {
                return Err(Error::invalid("gamma", format!("{} must be positive", b.gamma)));
            }
        }
        if integrator.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        Ok(LfmModel {
            dim,
            blocks,
            integrator,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[SubFlow] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Apply `T_n` (data to noise) for block index `n` (0-based).
    pub fn push_block(&self, n: usize, xs: &Samples) -> Result<Samples> {
        self.check(xs)?;
        map_chunks(xs, |c| integrate_batch(&self.blocks[n].field, c, Direction::Forward, &self.integrator))
    }

    /// Apply `T_n^{-1}` (noise to data) for block index `n` (0-based).
    pub fn pull_block(&self, n: usize, ys: &Samples) -> Result<Samples> {
        self.check(ys)?;
        map_chunks(ys, |c| integrate_batch(&self.blocks[n].field, c, Direction::Reverse, &self.integrator))
    }

    /// Full data-to-noise map `T_N ∘ … ∘ T_1`.
    pub fn encode(&self, xs: &Samples) -> Result<Samples> {
        let mut cur = xs.clone();
        for n in 0..self.blocks.len() {
            cur = self.push_block(n, &cur)?;
        }
        Ok(cur)
    }

    /// Full noise-to-data map `T_1^{-1} ∘ … ∘ T_N^{-1}`.
    pub fn decode(&self, ys: &Samples) -> Result<Samples> {
        let mut cur = ys.clone();
        for n in (0..self.blocks.len()).rev() {
            cur = self.pull_block(n, &cur)?;
        }
        Ok(cur)
    }

    fn check(&self, xs: &Samples) -> Result<()> {
        if xs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "sample dimension",
                expected: self.dim,
                actual: xs.dim(),
            });
        }
        Ok(())
    }
}

fn map_chunks<F>(xs: &Samples, mut f: F) -> Result<Samples>
where
    F: FnMut(&Samples) -> Result<Samples>,
{
    if xs.len() <= CHUNK {
        return f(xs);
    }
    let mut data = Vec::with_capacity(xs.as_slice().len());
    let mut start = 0;
    while start < xs.len() {
        let end = (start + CHUNK).min(xs.len());
        data.extend(f(&xs.slice_rows(start, end))?.into_vec());
        start = end;
    }
    Samples::new(xs.dim(), data)
}

/// Everything produced by [`train_lfm`].
#[derive(Debug, Clone)]
pub struct LfmTrainOutput {
    pub model: LfmModel,
    /// Per-block loss histories, block 1 first.
    pub loss_histories: Vec<Vec<f64>>,
    /// Pools `p_0, …, p_N`: the data followed by its image after every block.
    pub pools: Vec<Samples>,
}

/// Seed used for block `n` (1-based) given the run's base block seed.
pub fn block_seed(base: u64, n: usize) -> u64 {
    derive_seed(base, stream::BLOCK_BASE + n as u64)
}

/// Train `N = schedule.n_blocks` blocks in sequence.
pub fn train_lfm(
    data: &Samples,
    schedule: &Schedule,
    per_block: &BlockTrainConfig,
    spec: &MlpSpec,
    integrator: &IntegratorConfig,
) -> Result<LfmTrainOutput> {
    train_lfm_with(data, schedule, per_block, spec, integrator, |_, _, _| {})
}

/// [`train_lfm`] with a callback after each block: `(block index 1-based, losses, pushed pool)`.
pub fn train_lfm_with<F>(
    data: &Samples,
    schedule: &Schedule,
    per_block: &BlockTrainConfig,
    spec: &MlpSpec,
    integrator: &IntegratorConfig,
    mut on_block: F,
) -> Result<LfmTrainOutput>
where
    F: FnMut(usize, &[f64], &Samples),
{
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            what: "data dimension vs network input",
            expected: spec.input_dim,
            actual: data.dim(),
        });
    }
    if spec.time_features == TimeFeatures::None {
        return Err(Error::invalid("time_features", "flow blocks need a time input"));
    }
    let d = data.dim();
    let n_blocks = schedule.n_blocks;
    let mut pools = vec![data.clone()];
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut histories = Vec::with_capacity(n_blocks);
    for n in 1..=n_blocks {
        let gamma = schedule.gammas()[n - 1];
        let pool = pools.last().unwrap();
        let mut cfg = per_block.clone();
        cfg.seed = block_seed(per_block.seed, n);
        let (field, history) = if n < n_blocks {
            let sampler = |rng: &mut ChaCha8Rng, b: usize| ou_right_sample(pool, gamma, rng, b);
            train_block(pool, sampler, spec, &cfg)?
        } else {
            let sampler = |rng: &mut ChaCha8Rng, b: usize| Ok(standard_normal_samples(rng, b, d));
            train_block(pool, sampler, spec, &cfg)?
        };
        let block = SubFlow {
            field,
            gamma,
            interpolant: per_block.interpolant,
        };
        let pushed = map_chunks(pool, |c| integrate_batch(&block.field, c, Direction::Forward, integrator))
            .map_err(|e| Error::NonFinite(format!("pushing pool through block {n}: {e}")))?;
        on_block(n, &history, &pushed);
        blocks.push(block);
        histories.push(history);
        pools.push(pushed);
    }
    Ok(LfmTrainOutput {
        model: LfmModel::new(blocks, *integrator)?,
        loss_histories: histories,
        pools,
    })
}

/// Draw `y_N ~ q` and run the reverse chain down to `y_0`.
pub fn generate<R: Rng + ?Sized>(model: &LfmModel, n_samples: usize, rng: &mut R) -> Result<Samples> {
    let noise = standard_normal_samples(rng, n_samples, model.dim());
    model.decode(&noise)
}

fn std_normal_logpdf(x: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    -0.5 * (x.len() as f64 * ln2pi + x.iter().map(|v| v * v).sum::<f64>())
}

/// Per-sample NLL in nats: `−[log q(x_N) + Σ_n ∫ ∇·v_n]`.
pub fn nll(model: &LfmModel, xs: &Samples) -> Result<Vec<f64>> {
    model.check(xs)?;
    let mut out = Vec::with_capacity(xs.len());
    let mut start = 0;
    while start < xs.len() {
        let end = (start + CHUNK).min(xs.len());
        let mut cur = xs.slice_rows(start, end);
        let mut acc = vec![0.0; cur.len()];
        for (n, block) in model.blocks.iter().enumerate() {
            let (next, div) = integrate_batch_with_divergence(&block.field, &cur, Direction::Forward, &model.integrator)
                .map_err(|e| Error::NonFinite(format!("likelihood pass through block {}: {e}", n + 1)))?;
            for (a, d) in acc.iter_mut().zip(&div) {
                *a += d;
            }
            if acc.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite(format!("divergence accumulation at block {}", n + 1)));
            }
            cur = next;
        }
        for (row, a) in cur.rows().zip(&acc) {
            out.push(-(std_normal_logpdf(row) + a));
        }
        start = end;
    }
    Ok(out)
}

/// Few-step sampler: `T_n^D(x) = x + f_n(x)` applied noise side first.
#[derive(Debug, Clone, PartialEq)]
pub struct DistilledModel {
    dim: usize,
    maps: Vec<VelocityField>,
}

impl DistilledModel {
    pub fn new(maps: Vec<VelocityField>) -> Result<Self> {
        let dim = maps.first().ok_or(Error::Empty("distilled maps"))?.dim();
        for m in &maps {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "residual map dimension",
                    expected: dim,
                    actual: m.dim(),
                });
            }
            if m.spec().time_features != TimeFeatures::None {
                return Err(Error::invalid("time_features", "residual maps take no time input"));
            }
        }
        Ok(DistilledModel { dim, maps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maps(&self) -> &[VelocityField] {
        &self.maps
    }

    /// Network evaluations per generated sample.
    pub fn nfe(&self) -> usize {
        self.maps.len()
    }

    /// Apply one residual step `x + f_n(x)` (0-based `n`).
    pub fn apply_step(&self, n: usize, xs: &Samples) -> Result<Samples> {
        if xs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "sample dimension",
                expected: self.dim,
                actual: xs.dim(),
            });
        }
        map_chunks(xs, |c| {
            let ts = vec![0.0; c.len()];
            let f = self.maps[n].forward_batch(c.as_slice(), &ts)?;
            let data = c.as_slice().iter().zip(&f).map(|(x, f)| x + f).collect();
            Samples::new(c.dim(), data)
        })
    }

    pub fn apply(&self, ys: &Samples) -> Result<Samples> {
        let mut cur = ys.clone();
        for n in 0..self.maps.len() {
            cur = self.apply_step(n, &cur)?;
        }
        Ok(cur)
    }
}

/// Push one noise batch through the teacher's reverse chain, recording every
/// state: `chain[0] = q_N` (the noise) … `chain[N] = q_0`.
pub fn reverse_chain(teacher: &LfmModel, noise: &Samples) -> Result<Vec<Samples>> {
    let mut chain = vec![noise.clone()];
    for n in (0..teacher.n_blocks()).rev() {
        let next = teacher.pull_block(n, chain.last().unwrap())?;
        chain.push(next);
    }
    Ok(chain)
}

/// Distilled model and each map's training losses.
#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub model: DistilledModel,
    pub loss_histories: Vec<Vec<f64>>,
}

/// Train `N′ = N / k` residual maps on pairs read off the teacher's reverse
/// chain: step `n` maps the state after `k(n−1)` reverse blocks to the state
/// after `kn` reverse blocks.
///
/// `chain` is the output of [`reverse_chain`]. `spec` must have no time input;
/// `cfg.interpolant` and `cfg.time_sampler` are unused.
pub fn distill(
    teacher: &LfmModel,
    chain: &[Samples],
    k: usize,
    cfg: &BlockTrainConfig,
    spec: &MlpSpec,
) -> Result<DistillOutput> {
    let n_blocks = teacher.n_blocks();
    if k == 0 || n_blocks % k != 0 {
        return Err(Error::invalid(
            "k",
            format!("{k} does not divide the number of teacher blocks {n_blocks}"),
        ));
    }
    if chain.len() != n_blocks + 1 {
        return Err(Error::DimensionMismatch {
            what: "reverse chain length (N + 1)",
            expected: n_blocks + 1,
            actual: chain.len(),
        });
    }
    if spec.time_features != TimeFeatures::None {
        return Err(Error::invalid("time_features", "residual maps take no time input"));
    }
    if spec.input_dim != teacher.dim() {
        return Err(Error::DimensionMismatch {
            what: "residual map input",
            expected: teacher.dim(),
            actual: spec.input_dim,
        });
    }
    cfg.validate()?;
    let n_steps = n_blocks / k;
    let mut maps = Vec::with_capacity(n_steps);
    let mut histories = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let src = &chain[k * (n - 1)];
        let dst = &chain[k * n];
        if src.len() != dst.len() || src.is_empty() {
            return Err(Error::invalid("chain", "segments must hold the same non-empty particle set"));
        }
        let mut step_cfg = cfg.clone();
        step_cfg.seed = block_seed(cfg.seed, n);
        let (field, history) = train_residual(src, dst, spec, &step_cfg)?;
        maps.push(field);
        histories.push(history);
    }
    Ok(DistillOutput {
        model: DistilledModel::new(maps)?,
        loss_histories: histories,
    })
}

/// Regress `dst − src` onto `f(src)` with minibatch Adam.
fn train_residual(src: &Samples, dst: &Samples, spec: &MlpSpec, cfg: &BlockTrainConfig) -> Result<(VelocityField, Vec<f64>)> {
    use crate::app::seeds::stream_rng;
    use crate::fmtrain::{adam_step, AdamState};
    use crate::netcore::ParamVector;

    let d = src.dim();
    let mut field = VelocityField::init(spec.clone(), &mut stream_rng(cfg.seed, stream::INIT))?;
    let mut rng = stream_rng(cfg.seed, stream::BATCHES);
    let b = cfg.batch_size;
    let ts = vec![0.0; b];
    let mut xs = vec![0.0; b * d];
    let mut target = vec![0.0; b * d];
    let mut state = AdamState::new(field.params().len());
    let mut grad = ParamVector::zeros(field.params().len());
    let mut history = Vec::with_capacity(cfg.n_batches);
    for batch in 0..cfg.n_batches {
        for i in 0..b {
            let j = rng.gen_range(0..src.len());
            let (s, t) = (src.row(j), dst.row(j));
            for c in 0..d {
                xs[i * d + c] = s[c];
                target[i * d + c] = t[c] - s[c];
            }
        }
        let loss = field.loss_and_grad_into(&xs, &ts, &target, &mut grad)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("distillation loss at batch {batch}")));
        }
        history.push(loss);
        adam_step(field.params_mut(), &grad, &mut state, &cfg.adam)?;
    }
    Ok((field, history))
}

/// `y ~ N(0, I)` followed by the `N′` residual steps.
pub fn generate_distilled<R: Rng + ?Sized>(dm: &DistilledModel, n_samples: usize, rng: &mut R) -> Result<Samples> {
    let noise = standard_normal_samples(rng, n_samples, dm.dim());
    dm.apply(&noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Activation;
    use rand::SeedableRng;

    fn zero_model(d: usize, n: usize) -> LfmModel {
        let spec = MlpSpec::new(d, vec![8], Activation::Softplus, TimeFeatures::Raw).unwrap();
        let blocks = (0..n)
            .map(|_| SubFlow {
                field: VelocityField::zeros(spec.clone()).unwrap(),
                gamma: 0.1,
                interpolant: InterpolantKind::Ot,
            })
            .collect();
        LfmModel::new(blocks, IntegratorConfig::default()).unwrap()
    }

    #[test]
    fn zero_model_nll_is_standard_normal() {
        let m = zero_model(2, 3);
        let xs = Samples::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let v = nll(&m, &xs).unwrap();
        assert!((v[0] - 1.8378770664093453).abs() < 1e-12);
        assert!((v[1] - 2.8378770664093453).abs() < 1e-12);
    }

    #[test]
    fn zero_model_generates_noise() {
        let m = zero_model(2, 2);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let g = generate(&m, 10, &mut a).unwrap();
        let z = standard_normal_samples(&mut b, 10, 2);
        assert_eq!(g, z);
    }

    #[test]
    fn distill_rejects_non_divisor() {
        let m = zero_model(2, 3);
        let chain = reverse_chain(&m, &Samples::zeros(4, 2)).unwrap();
        let spec = MlpSpec::new(2, vec![4], Activation::Tanh, TimeFeatures::None).unwrap();
        let cfg = BlockTrainConfig {
            adam: Default::default(),
            batch_size: 2,
            n_batches: 1,
            interpolant: InterpolantKind::Ot,
            time_sampler: crate::flowmath::TimeSampler::uniform(),
            seed: 0,
        };
        assert!(distill(&m, &chain, 2, &cfg, &spec).is_err());
        assert!(distill(&m, &chain, 3, &cfg, &spec).is_ok());
    }

    #[test]
    fn model_requires_blocks() {
        assert!(LfmModel::new(vec![], IntegratorConfig::default()).is_err());
        assert!(DistilledModel::new(vec![]).is_err());
    }
}
