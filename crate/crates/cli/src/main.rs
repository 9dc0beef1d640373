//! `autoquant` — quantile forecasts from point forecasters, selected and
//! tuned under an explicit compute budget.
//!
//! Subcommands: `fit-default` (one default-configuration fit per method,
//! sampling-width search only), `fit-advanced` (joint hyperparameter + width
//! search with successive halving; warm-startable and resumable),
//! `evaluate` (score forecast CSVs), `report` (plot-ready exports from a
//! checkpoint), and `synth` (benchmark data generation).
//!
//! Exit codes: 1 configuration, 2 input data, 3 runtime failure,
//! 4 checkpoint problems.

mod config;
mod errors;
mod evaluate;
mod report;
mod run;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::errors::CliError;

#[derive(Parser)]
#[command(name = "autoquant", version, about = "Quantile forecasts from point forecasters under a compute budget")]
struct Cli {
    /// Omit volatile fields (generation timestamps) from written reports so
    /// reruns with the same seed are byte-identical.
    #[arg(long, global = true)]
    deterministic_output: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured method once with default hyperparameters and
    /// optimize only the sampling width.
    FitDefault {
        /// Run manifest (JSON).
        #[arg(short = 'c', long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Joint hyperparameter + sampling-width search with successive halving.
    FitAdvanced {
        /// Run manifest (JSON).
        #[arg(short = 'c', long, value_name = "FILE")]
        config: PathBuf,
        /// Seed the search from a finished default run's checkpoint.
        #[arg(long, value_name = "DIR", conflicts_with = "resume")]
        warm_start: Option<PathBuf>,
        /// Continue an interrupted run from its checkpoint.
        #[arg(long, value_name = "DIR")]
        resume: Option<PathBuf>,
        /// Stop after ROUND:METHOD_INDEX:COMPLETIONS, leaving a resumable
        /// checkpoint (crash-recovery testing).
        #[arg(long, hide = true, value_name = "R:M:C")]
        stop_after: Option<String>,
    },
    /// Score a long-format quantile CSV against cell-aligned truths.
    Evaluate {
        /// Forecast CSV with columns origin_timestamp,h,level,value.
        #[arg(short = 'f', long, value_name = "FILE")]
        forecast: PathBuf,
        /// Truth CSV with columns origin_timestamp,h,value.
        #[arg(short = 't', long, value_name = "FILE")]
        truth: PathBuf,
        /// Comma-separated list: crps, pinball@L, coverage@LO:HI.
        #[arg(short = 'm', long, value_name = "LIST")]
        metrics: String,
        /// Also write the metrics JSON to a file.
        #[arg(short = 'o', long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Emit convergence, pruning, and resource data from a checkpoint.
    Report {
        /// Checkpoint directory (contains store.json).
        dir: PathBuf,
    },
    /// Generate a synthetic benchmark dataset CSV.
    Synth {
        /// Generator: hetero_ar1, sinusoid_exo, or iid_gaussian.
        #[arg(short = 'g', long, default_value = "hetero_ar1")]
        generator: String,
        /// Series length in steps.
        #[arg(short = 'n', long, default_value_t = 960)]
        length: usize,
        #[arg(short = 's', long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(short = 'o', long, value_name = "FILE")]
        output: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let deterministic = cli.deterministic_output;
    match cli.command {
        Command::FitDefault { config } => run::cmd_fit_default(&config, deterministic),
        Command::FitAdvanced {
            config,
            warm_start,
            resume,
            stop_after,
        } => run::cmd_fit_advanced(
            &config,
            warm_start.as_deref(),
            resume.as_deref(),
            stop_after.as_deref(),
            deterministic,
        ),
        Command::Evaluate {
            forecast,
            truth,
            metrics,
            output,
        } => evaluate::cmd_evaluate(&forecast, &truth, &metrics, output.as_deref()),
        Command::Report { dir } => report::cmd_report(&dir),
        Command::Synth {
            generator,
            length,
            seed,
            output,
        } => synth::cmd_synth(&generator, length, seed, &output),
    }
}

fn main() -> ExitCode {
    // Usage mistakes are configuration errors (exit 1); --help/--version are
    // not errors at all.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
