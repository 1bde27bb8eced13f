//! `levyheat`: sample noise, solve, and verify from one TOML config.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | invalid config or parameters (also command-line usage errors) |
//! | 3 | numerical failure (non-contraction, blow-up, kernel accuracy) |
//! | 4 | an experiment ran but did not pass |
//! | 5 | I/O failure |
//! | 6 | a coefficient hypothesis or experiment precondition does not hold |
//! | 1 | anything else |

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levyheat::ErrorClass;

use crate::commands::ExperimentFailure;
use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "levyheat",
    version,
    about = "Stochastic heat equation with truncated alpha-stable noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one noise path and write it in columnar form.
    SampleNoise(Common),
    /// Solve the configured problem on one noise path.
    Solve(Common),
    /// Run the configured experiments and write their reports.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `levyheat-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo paths.
    #[arg(long)]
    threads: Option<usize>,
}

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_EXPERIMENT: u8 = 4;
pub const EXIT_IO: u8 = 5;
pub const EXIT_PRECONDITION: u8 = 6;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ExperimentFailure>() {
            return EXIT_EXPERIMENT;
        }
        if cause.is::<ConfigError>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<levyheat::Error>() {
            return match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Precondition => EXIT_PRECONDITION,
                ErrorClass::Io => EXIT_IO,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, action): (_, fn(&RunConfig, &std::path::Path) -> anyhow::Result<()>) = match cli.command {
        Command::SampleNoise(c) => (c, commands::sample_noise_cmd),
        Command::Solve(c) => (c, commands::solve_cmd),
        Command::Verify(c) => (c, commands::verify_cmd),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("levyheat-out"));
    cfg.output = Some(out.clone());
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    action(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
