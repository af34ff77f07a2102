//! `mren` command-line front end.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mren_core::analysis::FlopConvention;
use mren_core::Error;

pub use commands::{
    cmd_ablate, cmd_analyze, cmd_eval, cmd_infer, cmd_train, AblationRow, AnalyzeOutcome,
    TrainOutcome,
};
pub use config::{ConfigFile, DataConfig};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    NonFinite = 3,
}

impl ExitStatus {
    pub fn of(err: &Error) -> Self {
        match err {
            Error::Usage(_) | Error::Config(_) => ExitStatus::Usage,
            Error::NonFinite(_) => ExitStatus::NonFinite,
            Error::Shape(_)
            | Error::Input(_)
            | Error::Decode { .. }
            | Error::Io { .. }
            | Error::Incompatible(_)
            | Error::Integrity(_) => ExitStatus::Data,
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "mren", version, about = "Lightweight image super-resolution: train, infer, evaluate, analyze")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory of HR PNG images
    Train(TrainArgs),
    /// Upscale one PNG image with a checkpoint
    Infer(InferArgs),
    /// Score a checkpoint (or the bicubic baseline) on a directory of HR images
    Eval(EvalArgs),
    /// Print parameter and FLOPs accounting for a configuration
    Analyze(AnalyzeArgs),
    /// Train short runs of every value on one ablation axis
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config with model/train/data sections
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of HR PNG images [default: data.hr_dir from the config]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Upscaling factor (2, 3 or 4) [default: model.scale from the config, 4]
    #[arg(long)]
    pub scale: Option<usize>,
    /// Output directory for checkpoints and train_log.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for initialization and patch sampling [default: train.seed from the config, 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Number of epochs [default: train.epochs from the config, 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Iterations per epoch [default: train.iterations_per_epoch from the config, 50]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Batch size [default: train.batch from the config, 16]
    #[arg(long)]
    pub batch: Option<usize>,
    /// HR patch side [default: train.patch from the config, 192]
    #[arg(long)]
    pub patch: Option<usize>,
    /// Initial learning rate [default: train.lr0 from the config, 5e-4]
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Checkpoint file
    #[arg(long)]
    pub model: PathBuf,
    /// Input PNG
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file, or `bicubic` for the parameter-free baseline
    #[arg(long)]
    pub model: String,
    /// Directory of HR PNG images
    #[arg(long)]
    pub hr_dir: PathBuf,
    /// Also write the table as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Upscaling factor for the bicubic baseline; checkpoints use their own
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSON config; only the model section is used
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Upscaling factor [default: model.scale from the config, 4]
    #[arg(long)]
    pub scale: Option<usize>,
    /// Output resolution WxH for the FLOPs estimate
    #[arg(long, default_value = "1280x720", value_parser = parse_resolution)]
    pub resolution: (usize, usize),
    /// Count a multiply-accumulate as one (mac) or two (mac2) operations
    #[arg(long, default_value = "mac", value_parser = parse_convention)]
    pub convention: FlopConvention,
    /// Write the per-block parameter table as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Axis to sweep: mreb, w, scacb or dracb
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values [default: every value on the axis]
    #[arg(long)]
    pub values: Option<String>,
    /// Directory of HR PNG images [default: data.hr_dir from the config]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training iterations per variant
    #[arg(long, default_value_t = 10)]
    pub budget_iters: usize,
    /// JSON config supplying the base model and training settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Upscaling factor [default: model.scale from the config, 4]
    #[arg(long)]
    pub scale: Option<usize>,
    /// HR patch side
    #[arg(long, default_value_t = 48)]
    pub patch: usize,
    /// Batch size
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Seed for initialization and sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the comparison table as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("invalid dimension {v:?}"));
    Ok((parse(w)?, parse(h)?))
}

fn parse_convention(s: &str) -> Result<FlopConvention, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    ExitStatus::Success
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    ExitStatus::Usage
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, out).map(drop),
        Command::Infer(a) => cmd_infer(a, out).map(drop),
        Command::Eval(a) => cmd_eval(a, out).map(drop),
        Command::Analyze(a) => cmd_analyze(a, out).map(drop),
        Command::Ablate(a) => cmd_ablate(a, out).map(drop),
    };
    match result {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            ExitStatus::of(&e)
        }
    }
}
