//! Command-line front end: train, predict, evaluate, gradcheck, inspect.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Profile;
use trajflow::data::DatasetFormat;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<trajflow::Error> for CliError {
    fn from(e: trajflow::Error) -> Self {
        match e {
            trajflow::Error::Numeric { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "trajflow",
    version,
    about = "Spline-flow trajectory forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes checkpoints, history and the resolved config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample futures for every window of a window file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Window file as written by `export-windows`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Keep only the most likely `top-k` of `samples` candidates.
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one or more scenes.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Supplies windowing and evaluation settings; profile defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenes to score; defaults to `data.test` of the config.
        #[arg(long)]
        dataset: Vec<PathBuf>,
        #[arg(long)]
        format: Option<DatasetFormat>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the analytic gradients on a small model.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a checkpoint's configuration and parameter groups.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write the windows of the configured scenes to a window file.
    ExportWindows {
        #[arg(long)]
        config: PathBuf,
        /// Export evaluation windows of `data.test` instead of training windows.
        #[arg(long)]
        test: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a default configuration.
    InitConfig {
        #[arg(long, value_enum, default_value_t = Profile::EthUcy)]
        profile: Profile,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seed, out } => commands::train(&config, seed, out),
        Command::Predict {
            checkpoint,
            dataset,
            samples,
            top_k,
            seed,
            out,
        } => commands::predict(&checkpoint, &dataset, samples, top_k, seed, &out),
        Command::Evaluate {
            checkpoint,
            config,
            dataset,
            format,
            samples,
            top_k,
            seed,
            out,
        } => commands::evaluate(commands::EvaluateArgs {
            checkpoint,
            config,
            datasets: dataset,
            format,
            samples,
            top_k,
            seed,
            out,
        }),
        Command::Gradcheck {
            config,
            tolerance,
            seed,
            out,
        } => commands::gradcheck(config.as_deref(), tolerance, seed, out.as_deref()),
        Command::Inspect { checkpoint } => commands::inspect(&checkpoint),
        Command::ExportWindows { config, test, out } => {
            commands::export_windows(&config, test, &out)
        }
        Command::InitConfig { profile, out } => commands::init_config(profile, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trajflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
