//! Local flow matching.
//!
//! A data-to-noise transport is assembled from `N` small flow-matching blocks.
//! Block `n` is trained to carry the current sample pool `p_{n-1}` onto its
//! Ornstein–Uhlenbeck diffused image over a short time `γ_n`; the last block
//! lands on the standard normal. Generation runs the blocks backward from
//! noise, likelihoods come from the instantaneous change-of-variables formula,
//! and the chain can be distilled into a few residual maps.
//!
//! Module map:
//!
//! - [`netcore`]: fully connected velocity networks with exact gradients and
//!   exact Jacobian traces.
//! - [`flowmath`]: interpolants, Beta time sampling, OU endpoints and closed-form
//!   OU Gaussian marginals, step schedules.
//! - [`odeint`]: fixed-step Euler/RK4 integration with optional divergence
//!   accumulation.
//! - [`fmtrain`]: Adam and single-block flow-matching training.
//! - [`lfm`]: the block pipeline (training, generation, NLL, distillation).
//! - [`datasets`]: toy samplers, Gaussian-mixture oracles, CSV ingestion.
//! - [`metrics`]: closed-form Gaussian divergences, energy distance, theory checks.
//! - [`app`]: configuration, presets, checkpoints and seed derivation used by the CLI.

pub mod app;
pub mod datasets;
pub mod error;
pub mod flowmath;
pub mod fmtrain;
pub mod lfm;
pub mod metrics;
pub mod netcore;
pub mod odeint;
pub mod samples;

pub use error::{Error, Result};
pub use samples::Samples;
