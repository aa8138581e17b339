//! Configuration, presets, checkpoints and seed derivation for the CLI.

pub mod checkpoint;
pub mod config;
pub mod presets;
pub mod run;
pub mod seeds;
