//! `ddarr`: simulate, generate, evaluate, detect and roc stages of the
//! residual-based fault diagnosis pipeline.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddarr::arrgen::SearchMode;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "ddarr", version, about = "Data-driven residual generation and fault detection")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Top-level seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Search strategy: forward or exhaustive (overrides `mode`).
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<SearchMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the four-tank system: baseline plus every fault scenario.
    Simulate,
    /// Learn the residual bank from normal data.
    Generate,
    /// Z-test residuals against fault datasets and build the signature matrix.
    Evaluate,
    /// Run the 3σ detector; exits with 10 when a fault is detected.
    Detect {
        /// Dataset to monitor instead of the configured fault datasets.
        #[arg(long, alias = "dataset")]
        data: Option<PathBuf>,
        /// Fault onset in seconds for `--data`.
        #[arg(long, requires = "data")]
        onset: Option<f64>,
    },
    /// Compare classifiers with and without the selected residual.
    Roc {
        /// Score a `score,label` CSV instead of running the experiment.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<SearchMode, String> {
    s.parse().map_err(|e: ddarr::Error| e.to_string())
}

fn run(cli: Cli) -> CliResult<i32> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    config.validate()?;
    match cli.command {
        Command::Simulate => commands::simulate(&config),
        Command::Generate => commands::generate(&config),
        Command::Evaluate => commands::evaluate(&config),
        Command::Detect { data, onset } => commands::detect(&config, data.as_deref(), onset),
        Command::Roc { scores } => commands::roc(&config, scores.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
