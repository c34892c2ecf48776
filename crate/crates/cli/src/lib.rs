//! `rangeseg` command-line front end.
//!
//! Exit status: 0 on success, 1 when a check fails, 2 on I/O or validation
//! errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::{Counts, RunManifest};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "rangeseg", version, about = "Range-image LiDAR semantic segmentation")]
pub struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "RANGESEG_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Where to write the run manifest. `project` and `infer` default to
    /// `<out>/manifest.json`; other commands only write one when asked.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project scans into range-image containers.
    Project(ProjectArgs),
    /// Predict per-point labels for scans.
    Infer(InferArgs),
    /// Score prediction label files against ground truth.
    Eval(EvalArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Report model parameter counts.
    Paramcount(ParamcountArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML configuration; the built-in SemanticKITTI setup when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Scan files (`.bin`).
    #[arg(long = "scan", required = true, num_args = 1..)]
    pub scans: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Weights file, or `random:SEED` for seeded random weights.
    #[arg(long)]
    pub weights: String,
    #[arg(long = "scan", required = true, num_args = 1..)]
    pub scans: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Refine back-projected labels with nearest-neighbour voting.
    #[arg(long, value_enum, default_value = "on")]
    pub knn: Toggle,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated logit shapes `NxCxHxW`.
    #[arg(long, default_value = "1x4x6x6,1x4x8x8", value_delimiter = ',')]
    pub sizes: Vec<String>,
    /// Random instances per loss and size.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Perturb the analytic gradients to exercise the failure path.
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct ParamcountArgs {
    #[command(flatten)]
    pub config: ConfigArg,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    CheckFailed,
}

pub fn run(cli: Cli) -> ExitCode {
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| commands::dispatch(&cli, threads)) {
        Ok(Outcome::Passed) => ExitCode::from(EXIT_OK),
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// Error chain joined with `: `, skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}
