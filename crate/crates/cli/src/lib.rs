//! `hsiseg` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid arguments or config, 3 unreadable or
//! missing input (dataset, checkpoint, report) or a locked run directory,
//! 4 unmapped label ids, 5 non-finite loss or gradient during training,
//! 6 checkpoint/dataset/config mismatch.

pub mod config;
mod data;
mod eval;
mod lock;
pub mod palette;
mod report;
mod stats;
mod synth;
mod train;

use clap::{Parser, Subcommand};
use hsiseg_core::Error;
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(3, message)
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        Self::new(6, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::NoBatches => 2,
            Error::UnmappedLabel(_) => 4,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) => 5,
            Error::ChannelMismatch { .. } | Error::CheckpointMismatch(_) | Error::ShapeMismatch(_) | Error::InvalidCrop { .. } => 6,
            Error::EmptyDataset
            | Error::NoLabeledPixels
            | Error::NoSupervisedPixels
            | Error::UnsupportedVersion { .. }
            | Error::MissingSampleFile(_)
            | Error::TruncatedFile { .. }
            | Error::ChecksumMismatch(_)
            | Error::CorruptCheckpoint(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "hsiseg", version, about = "Hyperspectral semantic segmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset in canonical form.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Standard deviation of the additive Gaussian noise.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class pixel distribution of one or more datasets.
    Stats {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        /// Class names: a built-in taxonomy name or a file with `name =` and `classes =` lines.
        #[arg(long)]
        taxonomy: Option<String>,
        /// Relabel map applied first: a shipped map name or a map file.
        #[arg(long)]
        relabel: Option<String>,
    },
    /// Train a model; writes checkpoints, history and the resolved config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint of this run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Write each predicted label map as an indexed PNG here.
        #[arg(long)]
        dump_predictions: Option<PathBuf>,
        /// Run directory receiving `eval/`; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine the evaluation reports of several runs into one table.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { seed, count, height, width, bands, classes, noise, out } => {
            let cfg = hsiseg_core::dataset::SynthConfig { seed, count, height, width, bands, classes, noise_sigma: noise };
            synth::cmd_synth(&cfg, &out)
        }
        Command::Stats { datasets, taxonomy, relabel } => stats::cmd_stats(&datasets, taxonomy.as_deref(), relabel.as_deref()),
        Command::Train { config, out, resume } => train::cmd_train(&config, &out, resume.as_deref()),
        Command::Eval { checkpoint, dataset, split, dump_predictions, out } => {
            let split = split.parse().map_err(|e: Error| CliError::config(e.to_string()))?;
            eval::cmd_eval(&checkpoint, &dataset, split, dump_predictions.as_deref(), out.as_deref())
        }
        Command::Report { runs, format } => {
            let format = format.parse().map_err(|e: Error| CliError::config(e.to_string()))?;
            report::cmd_report(&runs, format)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
