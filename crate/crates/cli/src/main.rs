//! Command-line front end: run experiments, sweep the strictness factor,
//! replay recorded traces offline, and summarize metrics files.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 I/O error. No subcommand
//! leaves partial output behind: files are written to a sibling temp path and
//! renamed on success.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

pub(crate) const EXIT_USAGE: u8 = 2;
pub(crate) const EXIT_IO: u8 = 3;

/// An error already classified with its process exit code.
#[derive(Debug)]
pub(crate) struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "opsdemo",
    version,
    about = "Online opponent policy-switch detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment; writes metrics.csv, summary.json, trace.jsonl.
    Simulate {
        /// Experiment config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one experiment per strictness factor; writes per-alpha summaries
    /// and a combined sweep.csv table.
    Sweep {
        /// Experiment config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated strictness factors, each in [0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a recorded trace through a detector; writes replay.csv and
    /// replay_summary.json.
    Trace {
        /// Policy-bank JSON file.
        #[arg(long)]
        bank: PathBuf,
        /// Trace file (JSON Lines).
        #[arg(long)]
        trace: PathBuf,
        /// Strictness factor.
        #[arg(long, default_value_t = 0.95)]
        alpha: f64,
        /// Switch-detection threshold.
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize metrics files: rewards, histogram, accuracy, latency.
    Report {
        /// One or more metrics CSV files.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Optional directory for report.csv; the table always prints to
        /// stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Sweep {
            config,
            out,
            alpha,
            seed,
        } => commands::sweep(&config, &out, &alpha, seed),
        Command::Trace {
            bank,
            trace,
            alpha,
            threshold,
            out,
        } => commands::trace(&bank, &trace, alpha, threshold, &out),
        Command::Report { metrics, out } => commands::report(&metrics, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
