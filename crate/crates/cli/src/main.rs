//! `anifield`: batch front end for covariance, sampling and estimator runs.

mod cache;
mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "anifield", version, about = "Anisotropic Gaussian field pipelines")]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Check model assumptions and echo the derived exponents.
    Validate,
    /// Assemble the Gram matrix of the grid.
    Cov,
    /// Draw an exact ensemble on the grid.
    Sample,
    /// Small-ball probabilities and the exponent fit.
    Smallball,
    /// Chung-type statistic at the grid center.
    Chung,
    /// Local and uniform modulus statistics.
    Modulus,
    /// LIL constants and ratio convergence.
    Lilconst,
    /// Every stage above, sharing one cache.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(run::EXIT_PARSE);
    };
    let opts = run::Options {
        config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
    };
    ExitCode::from(run::execute(cli.stage, &opts))
}
