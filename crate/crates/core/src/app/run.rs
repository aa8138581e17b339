//! The CLI's commands as library functions.
//!
//! Each `cmd_*` function does the file I/O for one subcommand; the pure
//! pieces ([`build_dataset`], [`train_from_config`], [`distill_from_config`])
//! are public so tests can drive whole runs in memory.
//!
//! Files written by `train` into the output directory:
//!
//! - `model.ckpt`: the checkpoint,
//! - `loss_history.csv`: `block,batch,loss` per Adam update,
//! - `manifest.txt`: the fully resolved config (re-usable as `--config`),
//! - `standardization.csv` (CSV datasets only): per-column train mean and std.
//!   The model lives in standardized coordinates.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datasets::{load_csv, parse_csv, sample_checkerboard, sample_rose, GaussianMixture};
use crate::error::{Error, Result};
use crate::flowmath::DiagGaussian;
use crate::lfm::{distill, generate, generate_distilled, nll, reverse_chain, train_lfm_with, DistillOutput, LfmModel, LfmTrainOutput};
use crate::flowmath::standard_normal_samples;
use crate::metrics::{render_report, verify_suite};
use crate::samples::Samples;

use super::checkpoint::Checkpoint;
use super::config::{DatasetSpec, RunConfig};
use super::presets;
use super::seeds::{derive_seed, stream, stream_rng};

/// Train and held-out samples for a run, plus column statistics for CSV data.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Samples,
    pub test: Samples,
    /// `(means, stds)` used to standardize CSV data.
    pub standardization: Option<(Vec<f64>, Vec<f64>)>,
}

/// Draw (or load) the data a config describes. Synthetic train and test sets
/// use independent streams of `cfg.seed`.
pub fn build_dataset(cfg: &RunConfig) -> Result<RunData> {
    let mut train_rng = stream_rng(cfg.seed, stream::DATA);
    let mut test_rng = stream_rng(cfg.seed, stream::TEST_DATA);
    let synth = |f: &mut dyn FnMut(usize, &mut rand_chacha::ChaCha8Rng) -> Result<Samples>| -> Result<RunData> {
        Ok(RunData {
            train: f(cfg.n_train, &mut train_rng)?,
            test: f(cfg.n_test, &mut test_rng)?,
            standardization: None,
        })
    };
    let mut synth = synth;
    match &cfg.dataset {
        DatasetSpec::Rose { petals, noise } => synth(&mut |n, r| sample_rose(n, *petals, *noise, r)),
        DatasetSpec::Checkerboard => synth(&mut |n, r| Ok(sample_checkerboard(n, r))),
        DatasetSpec::Mixture8 { sigma } => {
            let gm = GaussianMixture::ring(8, 1.0, *sigma)?;
            synth(&mut |n, r| Ok(gm.sample(n, r)))
        }
        DatasetSpec::Gaussian { mean } => {
            let g = DiagGaussian::new(mean.clone(), vec![1.0; mean.len()])?;
            synth(&mut |n, r| Ok(g.sample(r, n)))
        }
        DatasetSpec::Csv {
            path,
            has_header,
            test_fraction,
        } => {
            let path = path
                .as_ref()
                .ok_or_else(|| Error::invalid("data_path", "required when dataset = csv"))?;
            let set = load_csv(path, *has_header, *test_fraction, cfg.seed)?;
            if set.dim() != cfg.dimension {
                return Err(Error::invalid(
                    "dimension",
                    format!(
                        "{} has {} columns but the config declares dimension {}",
                        path.display(),
                        set.dim(),
                        cfg.dimension
                    ),
                ));
            }
            Ok(RunData {
                standardization: Some((set.column_means.clone(), set.column_stds.clone())),
                train: set.train,
                test: set.test,
            })
        }
    }
}

/// Train an LFM model on already-built data. `on_block` sees
/// `(block, losses, pushed pool)` after each block.
pub fn train_on(
    cfg: &RunConfig,
    train: &Samples,
    on_block: impl FnMut(usize, &[f64], &Samples),
) -> Result<LfmTrainOutput> {
    cfg.validate()?;
    train_lfm_with(
        train,
        &cfg.schedule()?,
        &cfg.block_config(cfg.seed)?,
        &cfg.mlp_spec()?,
        &cfg.integrator()?,
        on_block,
    )
}

/// Build the data and train.
pub fn train_from_config(cfg: &RunConfig) -> Result<(LfmTrainOutput, RunData)> {
    let data = build_dataset(cfg)?;
    let out = train_on(cfg, &data.train, |_, _, _| {})?;
    Ok((out, data))
}

/// Push `cfg.distill_pairs` noise particles through the teacher and fit
/// `N / k` residual maps to the recorded chain.
pub fn distill_from_config(teacher: &LfmModel, k: usize, cfg: &RunConfig) -> Result<DistillOutput> {
    cfg.validate()?;
    if cfg.dimension != teacher.dim() {
        return Err(Error::invalid(
            "dimension",
            format!("config says {} but the model has dimension {}", cfg.dimension, teacher.dim()),
        ));
    }
    let noise = standard_normal_samples(&mut stream_rng(cfg.seed, stream::DISTILL_NOISE), cfg.distill_pairs, teacher.dim());
    let chain = reverse_chain(teacher, &noise)?;
    let block_cfg = cfg.block_config(derive_seed(cfg.seed, stream::DISTILL_TRAIN))?;
    distill(teacher, &chain, k, &block_cfg, &cfg.residual_spec()?)
}

pub fn loss_history_csv(histories: &[Vec<f64>]) -> String {
    let mut s = String::from("block,batch,loss\n");
    for (b, h) in histories.iter().enumerate() {
        for (i, l) in h.iter().enumerate() {
            let _ = writeln!(s, "{},{},{:?}", b + 1, i, l);
        }
    }
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text).map_err(|e| {
        Error::invalid("config", format!("{}: {e}", path.display()))
    })
}

fn samples_csv(xs: &Samples) -> String {
    let names: Vec<String> = (1..=xs.dim()).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    crate::datasets::to_csv(xs, Some(&refs))
}

/// `train --config <file> --out <dir>`. Returns the written checkpoint path.
pub fn cmd_train(config: &Path, out_dir: &Path) -> Result<PathBuf> {
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let data = build_dataset(&cfg)?;
    let out = train_on(&cfg, &data.train, |n, losses, _| {
        eprintln!(
            "block {n}/{}: {} batches, final loss {:.6}",
            cfg.n_subflows,
            losses.len(),
            losses.last().copied().unwrap_or(f64::NAN)
        );
    })?;
    let ckpt = out_dir.join("model.ckpt");
    Checkpoint::Lfm(out.model.clone()).save(&ckpt)?;
    write(&out_dir.join("loss_history.csv"), loss_history_csv(&out.loss_histories))?;
    write(&out_dir.join("manifest.txt"), cfg.to_text())?;
    if let Some((means, stds)) = &data.standardization {
        let mut s = String::from("column,mean,std\n");
        for (i, (m, sd)) in means.iter().zip(stds).enumerate() {
            let _ = writeln!(s, "{},{:?},{:?}", i + 1, m, sd);
        }
        write(&out_dir.join("standardization.csv"), s)?;
    }
    if !data.test.is_empty() {
        let v = nll(&out.model, &data.test)?;
        eprintln!("held-out mean NLL: {:.6} nats", mean(&v));
    }
    Ok(ckpt)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `generate --model <ckpt> --n <int> --seed <int> --out <csv>`; works for LFM
/// and distilled checkpoints.
pub fn cmd_generate(model: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut rng = stream_rng(seed, stream::GENERATE);
    let xs = match Checkpoint::load(model)? {
        Checkpoint::Lfm(m) => generate(&m, n, &mut rng)?,
        Checkpoint::Distilled(m) => generate_distilled(&m, n, &mut rng)?,
    };
    write(out, samples_csv(&xs))
}

/// `nll --model <ckpt> --data <csv> --out <csv>`: rows `index,nll`, then
/// `mean,<value>`. Returns the mean.
pub fn cmd_nll(model: &Path, data: &Path, has_header: bool, out: &Path) -> Result<f64> {
    let m = Checkpoint::load(model)?.into_lfm()?;
    let text = std::fs::read_to_string(data).map_err(|e| Error::io(data, e))?;
    let xs = parse_csv(&text, has_header)
        .map_err(|e| Error::invalid("data", format!("{}: {e}", data.display())))?;
    let v = nll(&m, &xs)?;
    let mu = mean(&v);
    let mut s = String::from("index,nll\n");
    for (i, x) in v.iter().enumerate() {
        let _ = writeln!(s, "{i},{x:?}");
    }
    let _ = writeln!(s, "mean,{mu:?}");
    write(out, s)?;
    Ok(mu)
}

/// `distill --model <ckpt> --k <int> --config <file> --out <dir>`.
pub fn cmd_distill(model: &Path, k: usize, config: &Path, out_dir: &Path) -> Result<PathBuf> {
    let teacher = Checkpoint::load(model)?.into_lfm()?;
    let cfg = load_config(config)?;
    ensure_dir(out_dir)?;
    let out = distill_from_config(&teacher, k, &cfg)?;
    let ckpt = out_dir.join("distilled.ckpt");
    Checkpoint::Distilled(out.model).save(&ckpt)?;
    write(&out_dir.join("loss_history.csv"), loss_history_csv(&out.loss_histories))?;
    let mut manifest = cfg.to_text();
    let _ = writeln!(manifest, "# distilled from {} with k = {k}", model.display());
    write(&out_dir.join("manifest.txt"), manifest)?;
    Ok(ckpt)
}

/// `verify --out <file>`. Returns whether every check passed.
pub fn cmd_verify(out: &Path) -> Result<bool> {
    let reports = verify_suite()?;
    write(out, render_report(&reports))?;
    Ok(reports.iter().all(|r| r.passed))
}

/// `presets --list`.
pub fn presets_listing() -> String {
    let mut s = String::new();
    for name in presets::NAMES {
        let _ = writeln!(s, "{name:<14} {}", presets::describe(name).unwrap_or(""));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            n_train: 200,
            n_test: 50,
            batch_size: 32,
            batches_per_block: 5,
            hidden_width: 8,
            hidden_layers: 1,
            n_subflows: 2,
            steps: 4,
            distill_pairs: 64,
            ..RunConfig::default()
        }
    }

    #[test]
    fn synthetic_data_is_seeded() {
        let a = build_dataset(&tiny()).unwrap();
        let b = build_dataset(&tiny()).unwrap();
        assert_eq!(a.train, b.train);
        assert_ne!(a.train.slice_rows(0, 50), a.test);
        assert_eq!((a.train.len(), a.test.len()), (200, 50));
    }

    #[test]
    fn csv_dimension_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "1,2,3\n4,5,7\n2,2,2\n9,1,0\n").unwrap();
        let cfg = RunConfig {
            dataset: DatasetSpec::Csv {
                path: Some(p),
                has_header: false,
                test_fraction: 0.25,
            },
            dimension: 2,
            ..tiny()
        };
        let e = build_dataset(&cfg).unwrap_err();
        assert!(e.to_string().contains("dimension"), "{e}");
        let ok = build_dataset(&RunConfig { dimension: 3, ..cfg }).unwrap();
        assert_eq!((ok.train.len(), ok.test.len()), (3, 1));
    }

    #[test]
    fn train_then_distill_in_memory() {
        let cfg = tiny();
        let (out, _) = train_from_config(&cfg).unwrap();
        assert_eq!(out.model.n_blocks(), 2);
        let d = distill_from_config(&out.model, 2, &cfg).unwrap();
        assert_eq!(d.model.nfe(), 1);
        assert!(distill_from_config(&out.model, 3, &cfg).is_err());
    }

    #[test]
    fn listing_mentions_every_preset() {
        let l = presets_listing();
        assert!(presets::NAMES.iter().all(|n| l.contains(n)));
    }
}
