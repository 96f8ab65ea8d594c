//! `rrae`: generate datasets, train autoencoders, evaluate and report.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rrae", version, about = "Rank reduction autoencoder experiments")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Validate inputs and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads. Computation is single-threaded; values above 1 are
    /// recorded but have no effect.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the train/test snapshot matrices to `<out>/dataset`.
    Generate,
    /// Train a model on `<out>/dataset` (or `--data`) and write a checkpoint.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Errors on both splits from the checkpoint in `<out>`.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Normalized singular values of the finalized latent matrix.
    Spectrum {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Decode convex blends of random pairs of training coefficients.
    InterpSet {
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Collect the evaluations of several run directories into one CSV.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Mean entropy of the rows of a probability CSV (N rows × C classes).
    Entropy {
        #[arg(long)]
        probs: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RRAE_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
