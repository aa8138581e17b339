//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. A
//! `preset = <name>` line (anywhere in the file) loads that preset first; all
//! other keys override it. Unknown and repeated keys are errors. The same
//! format is used for the run manifest, so a manifest can be fed back in as a
//! config.
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | base preset (see `presets --list`) |
//! | `dataset` | `rose`, `checkerboard`, `mixture8`, `gaussian` or `csv` |
//! | `dimension` | data dimension `d` |
//! | `data_path` | CSV file for `dataset = csv` |
//! | `has_header` | `true` / `false` |
//! | `test_fraction` | held-out fraction in `[0, 1)` |
//! | `rose_petals`, `rose_noise` | rose sampler parameters |
//! | `mixture_sigma` | component std of the 8-Gaussian ring |
//! | `gaussian_mean` | comma list, mean of the `gaussian` dataset (unit covariance) |
//! | `n_train`, `n_test` | sample counts for synthetic datasets |
//! | `batch_size` | minibatch size |
//! | `batches_per_block` | Adam updates per block |
//! | `hidden_width`, `hidden_layers` | per-block network size |
//! | `activation` | `relu`, `softplus`, `elu`, `tanh`, `linear` |
//! | `time_features` | `raw` or `sinusoidal:<k>` |
//! | `n_subflows` | number of blocks `N` |
//! | `c`, `rho` | step schedule `γ_n = ρ^{n−1} c` |
//! | `learning_rate` | Adam learning rate |
//! | `lr_decay_factor`, `lr_decay_every` | stepped decay (factor, period in batches) |
//! | `beta_alpha`, `beta_beta` | Beta law of training times |
//! | `interpolant` | `ot` or `trig` |
//! | `scheme`, `steps` | ODE integrator and steps per block |
//! | `distill_pairs` | noise particles pushed through the teacher for distillation |
//! | `seed` | global seed |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::flowmath::{make_schedule, InterpolantKind, Schedule, TimeSampler};
use crate::fmtrain::{AdamConfig, BlockTrainConfig};
use crate::netcore::{Activation, MlpSpec, TimeFeatures};
use crate::odeint::{IntegratorConfig, Scheme};

use super::presets;

#[derive(Debug, Error, PartialEq)]
#[error("config line {line}, key '{key}': {message}")]
pub struct ConfigError {
    /// 1-based line number, 0 when the problem is not tied to a line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Rose { petals: u32, noise: f64 },
    Checkerboard,
    Mixture8 { sigma: f64 },
    Gaussian { mean: Vec<f64> },
    Csv {
        path: Option<PathBuf>,
        has_header: bool,
        test_fraction: f64,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Rose { .. } => "rose",
            DatasetSpec::Checkerboard => "checkerboard",
            DatasetSpec::Mixture8 { .. } => "mixture8",
            DatasetSpec::Gaussian { .. } => "gaussian",
            DatasetSpec::Csv { .. } => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub dataset: DatasetSpec,
    pub dimension: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub batch_size: usize,
    pub batches_per_block: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub time_features: TimeFeatures,
    pub n_subflows: usize,
    pub c: f64,
    pub rho: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub interpolant: InterpolantKind,
    pub scheme: Scheme,
    pub steps: usize,
    pub distill_pairs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            dataset: DatasetSpec::Mixture8 { sigma: 0.1 },
            dimension: 2,
            n_train: 20_000,
            n_test: 2_000,
            batch_size: 512,
            batches_per_block: 1000,
            hidden_width: 64,
            hidden_layers: 3,
            activation: Activation::Softplus,
            time_features: TimeFeatures::Raw,
            n_subflows: 4,
            c: 0.1,
            rho: 1.25,
            learning_rate: 1e-3,
            lr_decay_factor: 0.99,
            lr_decay_every: 1000,
            beta_alpha: 1.0,
            beta_beta: 1.0,
            interpolant: InterpolantKind::Ot,
            scheme: Scheme::Rk4,
            steps: 20,
            distill_pairs: 20_000,
            seed: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "dataset",
    "dimension",
    "data_path",
    "has_header",
    "test_fraction",
    "rose_petals",
    "rose_noise",
    "mixture_sigma",
    "gaussian_mean",
    "n_train",
    "n_test",
    "batch_size",
    "batches_per_block",
    "hidden_width",
    "hidden_layers",
    "activation",
    "time_features",
    "n_subflows",
    "c",
    "rho",
    "learning_rate",
    "lr_decay_factor",
    "lr_decay_every",
    "beta_alpha",
    "beta_beta",
    "interpolant",
    "scheme",
    "steps",
    "distill_pairs",
    "seed",
];

fn parse_val<T: FromStr>(line: usize, key: &str, v: &str) -> std::result::Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| ConfigError::new(line, key, format!("cannot parse '{v}': {e}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> std::result::Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::new(line, key, format!("expected true or false, got '{v}'"))),
    }
}

impl RunConfig {
    /// Parse and validate a config file's text.
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, content, "expected 'key = value'"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::new(line, k, format!("unknown key (known keys: {})", KEYS.join(", "))));
            }
            if entries.iter().any(|(_, key, _)| key == k) {
                return Err(ConfigError::new(line, k, "key given more than once"));
            }
            entries.push((line, k.to_string(), v.to_string()));
        }
        let mut cfg = match entries.iter().find(|(_, k, _)| k == "preset") {
            Some((line, k, v)) => presets::preset(v).map_err(|e| ConfigError::new(*line, k, e.to_string()))?,
            None => RunConfig::default(),
        };
        let mut dataset_kind = cfg.dataset.name().to_string();
        if let Some((_, _, v)) = entries.iter().find(|(_, k, _)| k == "dataset") {
            dataset_kind = v.clone();
        }
        let line_of = |key: &str| entries.iter().find(|(_, k, _)| k == key).map(|e| e.0).unwrap_or(0);
        // Rebuild the dataset when its kind changes, keeping existing parameters otherwise.
        if dataset_kind != cfg.dataset.name() {
            cfg.dataset = match dataset_kind.as_str() {
                "rose" => DatasetSpec::Rose { petals: 4, noise: 0.02 },
                "checkerboard" => DatasetSpec::Checkerboard,
                "mixture8" => DatasetSpec::Mixture8 { sigma: 0.1 },
                "gaussian" => DatasetSpec::Gaussian { mean: vec![0.0; 2] },
                "csv" => DatasetSpec::Csv {
                    path: None,
                    has_header: false,
                    test_fraction: 0.1,
                },
                other => {
                    return Err(ConfigError::new(
                        line_of("dataset"),
                        "dataset",
                        format!("unknown dataset '{other}' (expected rose, checkerboard, mixture8, gaussian or csv)"),
                    ))
                }
            };
        }
        for (line, key, v) in &entries {
            let (line, v) = (*line, v.as_str());
            let wrong_dataset = || ConfigError::new(line, key, format!("does not apply to dataset '{dataset_kind}'"));
            match key.as_str() {
                "preset" | "dataset" => {}
                "dimension" => cfg.dimension = parse_val(line, key, v)?,
                "data_path" => match &mut cfg.dataset {
                    DatasetSpec::Csv { path, .. } => *path = Some(PathBuf::from(v)),
                    _ => return Err(wrong_dataset()),
                },
                "has_header" => match &mut cfg.dataset {
                    DatasetSpec::Csv { has_header, .. } => *has_header = parse_bool(line, key, v)?,
                    _ => return Err(wrong_dataset()),
                },
                "test_fraction" => match &mut cfg.dataset {
                    DatasetSpec::Csv { test_fraction, .. } => *test_fraction = parse_val(line, key, v)?,
                    _ => return Err(wrong_dataset()),
                },
                "rose_petals" => match &mut cfg.dataset {
                    DatasetSpec::Rose { petals, .. } => *petals = parse_val(line, key, v)?,
                    _ => return Err(wrong_dataset()),
                },
                "rose_noise" => match &mut cfg.dataset {
                    DatasetSpec::Rose { noise, .. } => *noise = parse_val(line, key, v)?,
                    _ => return Err(wrong_dataset()),
                },
                "mixture_sigma" => match &mut cfg.dataset {
                    DatasetSpec::Mixture8 { sigma } => *sigma = parse_val(line, key, v)?,
                    _ => return Err(wrong_dataset()),
                },
                "gaussian_mean" => match &mut cfg.dataset {
                    DatasetSpec::Gaussian { mean } => {
                        *mean = v
                            .split(',')
                            .map(|s| parse_val::<f64>(line, key, s.trim()))
                            .collect::<std::result::Result<_, _>>()?
                    }
                    _ => return Err(wrong_dataset()),
                },
                "n_train" => cfg.n_train = parse_val(line, key, v)?,
                "n_test" => cfg.n_test = parse_val(line, key, v)?,
                "batch_size" => cfg.batch_size = parse_val(line, key, v)?,
                "batches_per_block" => cfg.batches_per_block = parse_val(line, key, v)?,
                "hidden_width" => cfg.hidden_width = parse_val(line, key, v)?,
                "hidden_layers" => cfg.hidden_layers = parse_val(line, key, v)?,
                "activation" => cfg.activation = parse_val(line, key, v)?,
                "time_features" => cfg.time_features = parse_val(line, key, v)?,
                "n_subflows" => cfg.n_subflows = parse_val(line, key, v)?,
                "c" => cfg.c = parse_val(line, key, v)?,
                "rho" => cfg.rho = parse_val(line, key, v)?,
                "learning_rate" => cfg.learning_rate = parse_val(line, key, v)?,
                "lr_decay_factor" => cfg.lr_decay_factor = parse_val(line, key, v)?,
                "lr_decay_every" => cfg.lr_decay_every = parse_val(line, key, v)?,
                "beta_alpha" => cfg.beta_alpha = parse_val(line, key, v)?,
                "beta_beta" => cfg.beta_beta = parse_val(line, key, v)?,
                "interpolant" => cfg.interpolant = parse_val(line, key, v)?,
                "scheme" => cfg.scheme = parse_val(line, key, v)?,
                "steps" => cfg.steps = parse_val(line, key, v)?,
                "distill_pairs" => cfg.distill_pairs = parse_val(line, key, v)?,
                "seed" => cfg.seed = parse_val(line, key, v)?,
                _ => unreachable!("key list checked above"),
            }
        }
        if let DatasetSpec::Gaussian { mean } = &cfg.dataset {
            if !entries.iter().any(|(_, k, _)| k == "dimension") {
                cfg.dimension = mean.len();
            }
        }
        cfg.validate().map_err(|e| match e {
            Error::Config(c) => {
                let line = line_of(&c.key);
                ConfigError { line, ..c }
            }
            other => ConfigError::new(0, "config", other.to_string()),
        })?;
        Ok(cfg)
    }

    /// Check internal consistency; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| -> Error { ConfigError::new(0, key, msg).into() };
        let positive_usize = [
            ("dimension", self.dimension),
            ("n_train", self.n_train),
            ("batch_size", self.batch_size),
            ("batches_per_block", self.batches_per_block),
            ("hidden_width", self.hidden_width),
            ("hidden_layers", self.hidden_layers),
            ("n_subflows", self.n_subflows),
            ("steps", self.steps),
            ("distill_pairs", self.distill_pairs),
        ];
        for (k, v) in positive_usize {
            if v == 0 {
                return Err(bad(k, "must be at least 1".into()));
            }
        }
        if self.dimension > 4096 {
            return Err(bad("dimension", format!("{} is beyond desk scale", self.dimension)));
        }
        if self.lr_decay_every == 0 {
            return Err(bad("lr_decay_every", "must be at least 1".into()));
        }
        let positive_real = [
            ("c", self.c),
            ("rho", self.rho),
            ("learning_rate", self.learning_rate),
            ("beta_alpha", self.beta_alpha),
            ("beta_beta", self.beta_beta),
        ];
        for (k, v) in positive_real {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(k, format!("{v} must be positive and finite")));
            }
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(bad("lr_decay_factor", format!("{} must lie in (0, 1]", self.lr_decay_factor)));
        }
        if self.time_features == TimeFeatures::None {
            return Err(bad("time_features", "flow blocks need a time input".into()));
        }
        match &self.dataset {
            DatasetSpec::Rose { petals, noise } => {
                if *petals == 0 {
                    return Err(bad("rose_petals", "must be at least 1".into()));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(bad("rose_noise", format!("{noise} must be non-negative")));
                }
            }
            DatasetSpec::Mixture8 { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(bad("mixture_sigma", format!("{sigma} must be positive")));
                }
            }
            DatasetSpec::Gaussian { mean } => {
                if mean.len() != self.dimension {
                    return Err(bad(
                        "gaussian_mean",
                        format!("has {} entries but dimension is {}", mean.len(), self.dimension),
                    ));
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(bad("gaussian_mean", "entries must be finite".into()));
                }
            }
            DatasetSpec::Csv { test_fraction, .. } => {
                if !(0.0..1.0).contains(test_fraction) {
                    return Err(bad("test_fraction", format!("{test_fraction} must lie in [0, 1)")));
                }
            }
            DatasetSpec::Checkerboard => {}
        }
        let fixed_2d = matches!(
            self.dataset,
            DatasetSpec::Rose { .. } | DatasetSpec::Checkerboard | DatasetSpec::Mixture8 { .. }
        );
        if fixed_2d && self.dimension != 2 {
            return Err(bad(
                "dimension",
                format!("dataset '{}' is two-dimensional, not {}", self.dataset.name(), self.dimension),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        make_schedule(self.c, self.rho, self.n_subflows)
    }

    pub fn mlp_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(
            self.dimension,
            vec![self.hidden_width; self.hidden_layers],
            self.activation,
            self.time_features,
        )
    }

    /// Residual-map architecture for distillation: same widths, no time input.
    pub fn residual_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(
            self.dimension,
            vec![self.hidden_width; self.hidden_layers],
            self.activation,
            TimeFeatures::None,
        )
    }

    pub fn adam(&self) -> Result<AdamConfig> {
        AdamConfig::new(self.learning_rate, self.lr_decay_factor, self.lr_decay_every)
    }

    /// Per-block training settings; `seed` is the base from which block seeds derive.
    pub fn block_config(&self, seed: u64) -> Result<BlockTrainConfig> {
        Ok(BlockTrainConfig {
            adam: self.adam()?,
            batch_size: self.batch_size,
            n_batches: self.batches_per_block,
            interpolant: self.interpolant,
            time_sampler: TimeSampler::new(self.beta_alpha, self.beta_beta)?,
            seed,
        })
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        IntegratorConfig::new(self.scheme, self.steps)
    }

    /// Render every resolved setting in the config format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(p) = &self.preset {
            kv("preset", p.clone());
        }
        kv("dataset", self.dataset.name().into());
        kv("dimension", self.dimension.to_string());
        match &self.dataset {
            DatasetSpec::Rose { petals, noise } => {
                kv("rose_petals", petals.to_string());
                kv("rose_noise", format!("{noise:?}"));
            }
            DatasetSpec::Mixture8 { sigma } => kv("mixture_sigma", format!("{sigma:?}")),
            DatasetSpec::Gaussian { mean } => kv(
                "gaussian_mean",
                mean.iter().map(|m| format!("{m:?}")).collect::<Vec<_>>().join(","),
            ),
            DatasetSpec::Csv {
                path,
                has_header,
                test_fraction,
            } => {
                if let Some(p) = path {
                    kv("data_path", p.display().to_string());
                }
                kv("has_header", has_header.to_string());
                kv("test_fraction", format!("{test_fraction:?}"));
            }
            DatasetSpec::Checkerboard => {}
        }
        kv("n_train", self.n_train.to_string());
        kv("n_test", self.n_test.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("batches_per_block", self.batches_per_block.to_string());
        kv("hidden_width", self.hidden_width.to_string());
        kv("hidden_layers", self.hidden_layers.to_string());
        kv("activation", self.activation.to_string());
        kv("time_features", self.time_features.to_string());
        kv("n_subflows", self.n_subflows.to_string());
        kv("c", format!("{:?}", self.c));
        kv("rho", format!("{:?}", self.rho));
        kv("learning_rate", format!("{:?}", self.learning_rate));
        kv("lr_decay_factor", format!("{:?}", self.lr_decay_factor));
        kv("lr_decay_every", self.lr_decay_every.to_string());
        kv("beta_alpha", format!("{:?}", self.beta_alpha));
        kv("beta_beta", format!("{:?}", self.beta_beta));
        kv("interpolant", self.interpolant.to_string());
        kv("scheme", self.scheme.to_string());
        kv("steps", self.steps.to_string());
        kv("distill_pairs", self.distill_pairs.to_string());
        kv("seed", self.seed.to_string());
        s
    }
}
