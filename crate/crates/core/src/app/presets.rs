//! Named hyperparameter presets.
//!
//! The full presets carry the published per-dataset settings verbatim, with
//! the total batch count split evenly over the blocks. The `-mini` variants
//! keep the shape of a run but shrink it to desk scale (roughly 20× fewer
//! batches, narrower networks, fewer blocks) so they finish in CI time.

use crate::error::{Error, Result};
use crate::flowmath::InterpolantKind;
use crate::netcore::{Activation, TimeFeatures};
use crate::odeint::Scheme;

use super::config::{DatasetSpec, RunConfig};

pub const NAMES: &[&str] = &[
    "rose",
    "tree",
    "power",
    "gas",
    "miniboone",
    "bsds300",
    "rose-mini",
    "tree-mini",
    "mixture8-mini",
];

/// One-line summaries for `presets --list`.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "rose" => "2-d rose curve, N=9, (c,rho)=(0.025,1.25), 256x3 softplus",
        "tree" => "2-d checkerboard stand-in for the fractal tree, same settings as rose",
        "power" => "6-d CSV, N=4, (c,rho)=(0.15,1.3), 256x4 relu",
        "gas" => "8-d CSV, N=2, (c,rho)=(0.05,1), 362x5 relu, Beta(1,0.5) times",
        "miniboone" => "43-d CSV, N=2, (c,rho)=(0.35,1), 362x4 relu",
        "bsds300" => "63-d CSV, N=4, (c,rho)=(0.25,1), 512x4 elu",
        "rose-mini" => "desk-scale rose: N=4, 64x3 softplus, batch 500",
        "tree-mini" => "desk-scale checkerboard: N=4, 64x3 softplus, batch 500",
        "mixture8-mini" => "8-Gaussian ring (sigma 0.1): N=4, (c,rho)=(0.1,1.25), 64x3 relu, batch 512, 5000 batches/block",
        _ => return None,
    })
}

fn split_batches(total: usize, n_blocks: usize) -> usize {
    total.div_ceil(n_blocks)
}

#[allow(clippy::too_many_arguments)]
fn table_row(
    name: &str,
    dataset: DatasetSpec,
    dimension: usize,
    n_train: usize,
    batch_size: usize,
    total_batches: usize,
    width: usize,
    layers: usize,
    activation: Activation,
    n_subflows: usize,
    (c, rho): (f64, f64),
    learning_rate: f64,
    (lr_decay_factor, lr_decay_every): (f64, u64),
    (beta_alpha, beta_beta): (f64, f64),
) -> RunConfig {
    RunConfig {
        preset: Some(name.to_string()),
        dataset,
        dimension,
        n_train,
        n_test: 10_000,
        batch_size,
        batches_per_block: split_batches(total_batches, n_subflows),
        hidden_width: width,
        hidden_layers: layers,
        activation,
        time_features: TimeFeatures::Raw,
        n_subflows,
        c,
        rho,
        learning_rate,
        lr_decay_factor,
        lr_decay_every,
        beta_alpha,
        beta_beta,
        interpolant: InterpolantKind::Ot,
        scheme: Scheme::Rk4,
        steps: 20,
        distill_pairs: 100_000,
        seed: 0,
    }
}

fn csv() -> DatasetSpec {
    DatasetSpec::Csv {
        path: None,
        has_header: false,
        test_fraction: 0.1,
    }
}

fn rose_data() -> DatasetSpec {
    DatasetSpec::Rose {
        petals: 4,
        noise: 0.02,
    }
}

fn mini(name: &str, dataset: DatasetSpec) -> RunConfig {
    RunConfig {
        preset: Some(name.to_string()),
        dataset,
        dimension: 2,
        n_train: 10_000,
        n_test: 2_000,
        batch_size: 500,
        batches_per_block: 625,
        hidden_width: 64,
        hidden_layers: 3,
        activation: Activation::Softplus,
        time_features: TimeFeatures::Raw,
        n_subflows: 4,
        c: 0.1,
        rho: 1.25,
        learning_rate: 2e-3,
        lr_decay_factor: 0.99,
        lr_decay_every: 100,
        beta_alpha: 1.0,
        beta_beta: 1.0,
        interpolant: InterpolantKind::Ot,
        scheme: Scheme::Rk4,
        steps: 20,
        distill_pairs: 5_000,
        seed: 0,
    }
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "rose" => table_row(
            name,
            rose_data(),
            2,
            2_000_000,
            10_000,
            50_000,
            256,
            3,
            Activation::Softplus,
            9,
            (0.025, 1.25),
            2e-4,
            (0.99, 1000),
            (1.0, 1.0),
        ),
        "tree" => table_row(
            name,
            DatasetSpec::Checkerboard,
            2,
            2_000_000,
            10_000,
            50_000,
            256,
            3,
            Activation::Softplus,
            9,
            (0.025, 1.25),
            2e-4,
            (0.99, 1000),
            (1.0, 1.0),
        ),
        "power" => table_row(
            name,
            csv(),
            6,
            1_615_917,
            30_000,
            100_000,
            256,
            4,
            Activation::Relu,
            4,
            (0.15, 1.3),
            5e-3,
            (0.99, 1000),
            (1.0, 1.0),
        ),
        "gas" => table_row(
            name,
            csv(),
            8,
            852_174,
            50_000,
            100_000,
            362,
            5,
            Activation::Relu,
            2,
            (0.05, 1.0),
            2e-3,
            (0.99, 1000),
            (1.0, 0.5),
        ),
        "miniboone" => table_row(
            name,
            csv(),
            43,
            29_556,
            1_000,
            100_000,
            362,
            4,
            Activation::Relu,
            2,
            (0.35, 1.0),
            5e-3,
            (0.9, 4000),
            (1.0, 1.0),
        ),
        "bsds300" => table_row(
            name,
            csv(),
            63,
            1_000_000,
            500,
            30_000,
            512,
            4,
            Activation::Elu,
            4,
            (0.25, 1.0),
            2e-3,
            (0.8, 4000),
            (1.0, 1.0),
        ),
        "rose-mini" => mini(name, rose_data()),
        "tree-mini" => mini(name, DatasetSpec::Checkerboard),
        "mixture8-mini" => RunConfig {
            n_train: 20_000,
            batch_size: 512,
            batches_per_block: 5_000,
            activation: Activation::Relu,
            learning_rate: 3e-3,
            lr_decay_factor: 0.8,
            lr_decay_every: 500,
            distill_pairs: 20_000,
            ..mini(name, DatasetSpec::Mixture8 { sigma: 0.1 })
        },
        other => {
            return Err(Error::invalid(
                "preset",
                format!("unknown preset '{other}'; known presets: {}", NAMES.join(", ")),
            ))
        }
    };
    Ok(cfg)
}
