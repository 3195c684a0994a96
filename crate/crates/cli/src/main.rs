//! `stepwise`: simulate, mine, detect, eval and ablate from the command line.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stepwise_core::Error;

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Step-by-step erasion temporal action detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic world.
    Simulate {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        /// World file to write.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Also write the ground truth in the evaluation layout.
        #[arg(long)]
        gt: Option<std::path::PathBuf>,
    },
    /// Mine a classifier sequence by step-by-step erasion.
    Mine {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        #[command(flatten)]
        source: Source,
        /// Trace file to write.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Fuse, refine and extract detections on every video.
    Detect {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        #[command(flatten)]
        source: Source,
        /// Trace written by `mine`.
        #[arg(long)]
        trace: std::path::PathBuf,
        /// Fuse this many classifiers for every class instead of the mined stopping steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Results file to write.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        #[arg(long)]
        results: std::path::PathBuf,
        /// Ground-truth file, or a world file to derive it from.
        #[arg(long)]
        gt: std::path::PathBuf,
        /// Comma-separated tIoU thresholds.
        #[arg(long, value_delimiter = ',')]
        tiou: Option<Vec<f64>>,
        /// Also report average mAP over 0.5:0.05:0.95.
        #[arg(long)]
        average: bool,
        /// Metrics JSON to write.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Metrics CSV to write (defaults to the JSON path with a .csv extension).
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
    },
    /// Sweep steps, mask, ω and σ and write mAP curves as CSV.
    Ablate {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        #[arg(long)]
        world: std::path::PathBuf,
        /// Sweep spec file; defaults to the built-in grids.
        #[arg(long)]
        sweep: Option<std::path::PathBuf>,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

/// Input videos: a synthetic world or offline score matrices.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    #[arg(long)]
    pub world: Option<std::path::PathBuf>,
    #[arg(long)]
    pub scores: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Naive,
    Truncated,
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long = "t-max", global = true)]
    pub t_max: Option<usize>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long = "l-min", global = true)]
    pub l_min: Option<usize>,
    #[arg(long = "no-crf", global = true)]
    pub no_crf: bool,
    #[arg(long = "no-mask", global = true)]
    pub no_mask: bool,
    #[arg(long, value_enum, global = true)]
    pub kernel: Option<Kernel>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
