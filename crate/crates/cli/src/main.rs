//! `spin`: fit, predict and benchmark large spatial linear models from CSV
//! files.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod commands;
mod error;
mod model_file;
mod table;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{benchmark, fit, oracle, predict, simulate};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "spin",
    version,
    about = "Spatial linear models for large point-referenced data"
)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate observations and a prediction grid.
    Simulate(simulate::SimulateArgs),
    /// Estimate covariance parameters and coefficients; writes a model file.
    Fit(fit::FitArgs),
    /// Point predictions at new sites.
    Predict(predict::PredictArgs),
    /// Prediction of the average over a region.
    BlockPredict(predict::BlockPredictArgs),
    /// Run a simulation experiment and summarize it.
    Benchmark(benchmark::BenchmarkArgs),
    /// Compare the partitioned fit with dense full-covariance computations.
    CompareOracle(oracle::CompareOracleArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Predict(a) => predict::run_predict(a),
        Command::BlockPredict(a) => predict::run_block(a),
        Command::Benchmark(a) => benchmark::run(a),
        Command::CompareOracle(a) => oracle::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPIN_LOG")
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
