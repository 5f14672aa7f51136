//! The `stepcoin` command-line tool.
//!
//! Exit codes: 0 on success, 1 when an input fails validation or a command
//! cannot complete, 2 on usage errors (bad flags, missing input files).

mod commands;
pub mod render;

use std::io::Write;
use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::run;

/// Thread cap for parallel evaluation and synthesis.
pub const THREADS_ENV: &str = "STEPCOIN_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stepcoin", version, about = "Step localization toolkit for instructional video corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a lexicon and optionally annotation, proposal or detection files against it.
    Validate(ValidateArgs),
    /// Step localization: mAP/mAR at each IoU threshold.
    EvalLoc(EvalLocArgs),
    /// Action segmentation: frame accuracy.
    EvalSeg(EvalSegArgs),
    /// Turn proposals into detections, with or without task-consistency.
    Refine(RefineArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Draw one video's ground truth and detections as SVG and text timelines.
    Render(RenderArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub lexicon: PathBuf,
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Violations listed per file before truncating.
    #[arg(long, default_value_t = 10)]
    pub max_violations: usize,
}

/// Task-consistency parameters shared by eval-loc and refine.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Attenuation of off-task steps; defaults to e^-2.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// NMS IoU threshold.
    #[arg(long, default_value_t = stepcoin_core::consistency::DEFAULT_NMS_THRESHOLD)]
    pub nms: f64,
    /// Step labels kept per proposal.
    #[arg(long, default_value_t = stepcoin_core::consistency::DEFAULT_TOP_C)]
    pub top_c: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["proposals", "detections"]))]
pub struct EvalLocArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Proposal file; turned into detections before scoring.
    #[arg(long)]
    pub proposals: Option<PathBuf>,
    /// Detection file, scored as is.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Apply task-consistency refinement to the proposals.
    #[arg(long)]
    pub with_tc: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// IoU thresholds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = stepcoin_core::metrics::DEFAULT_ALPHAS)]
    pub alphas: Vec<f64>,
    /// Only each video's best N detections count towards recall.
    #[arg(long)]
    pub max_per_video: Option<usize>,
    /// Directory receiving report.json and report.txt.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    /// Ground-truth annotation file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted frame-label file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Validate the ground truth against this lexicon as well.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Score only frames whose ground truth is a step.
    #[arg(long)]
    pub steps_only: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Skip refinement: top-c labels and NMS only.
    #[arg(long)]
    pub no_tc: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output detection file.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthesis config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub videos: Option<usize>,
    /// Use the fixed 12-domain / 180-task / 778-step lexicon.
    #[arg(long)]
    pub coin_lexicon: bool,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub score_noise: Option<f64>,
    #[arg(long)]
    pub contamination: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Also write uniformly random frame labels (a segmentation baseline).
    #[arg(long)]
    pub random_frames: bool,
    /// Sampling rate for --random-frames.
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection files, one lane each.
    #[arg(long = "detections")]
    pub detections: Vec<PathBuf>,
    #[arg(long)]
    pub video: String,
    /// Lexicon for the legend's step phrases.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// SVG output path.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the text timeline here (it always goes to stdout).
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Characters across the text timeline.
    #[arg(long, default_value_t = 72)]
    pub width: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding one sub-directory per project.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
}

/// Configures the global rayon pool from `STEPCOIN_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(format!("thread pool: {e}")))
}

/// Parses `args`, runs the command and returns the process exit code.
/// Normal output goes to `out`, diagnostics to `err`.
pub fn main_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
