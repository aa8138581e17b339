//! `localflow` command-line interface.
//!
//! Exit codes: 0 success, 1 validation error (bad input, config, file),
//! 2 runtime or numerical error, 3 verify-suite failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use localflow::app::run;
use localflow::Error;

#[derive(Parser)]
#[command(name = "localflow", version, about = "Local flow matching: train, sample, score, distill")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an LFM model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a checkpoint (LFM or distilled).
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample negative log-likelihood (nats) of a CSV under an LFM checkpoint.
    Nll {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// The data file starts with a header row.
        #[arg(long)]
        header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill an LFM checkpoint into N/k residual maps.
    Distill {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the closed-form Gaussian check suite.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Show the named presets.
    Presets {
        #[arg(long)]
        list: bool,
    },
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train { config, out } => run::cmd_train(&config, &out).map(|p| println!("{}", p.display())),
        Command::Generate { model, n, seed, out } => run::cmd_generate(&model, n, seed, &out),
        Command::Nll {
            model,
            data,
            header,
            out,
        } => run::cmd_nll(&model, &data, header, &out).map(|m| println!("mean NLL {m:.6}")),
        Command::Distill { model, k, config, out } => {
            run::cmd_distill(&model, k, &config, &out).map(|p| println!("{}", p.display()))
        }
        Command::Verify { out } => match run::cmd_verify(&out) {
            Ok(true) => {
                println!("all checks passed; report at {}", out.display());
                Ok(())
            }
            Ok(false) => {
                eprintln!("verify suite failed; see {}", out.display());
                return ExitCode::from(3);
            }
            Err(e) => Err(e),
        },
        Command::Presets { list: _ } => {
            print!("{}", run::presets_listing());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
