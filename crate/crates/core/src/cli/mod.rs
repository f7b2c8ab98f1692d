//! The `dyncgan` command line.
//!
//! Every subcommand resolves its configuration from built-in defaults, then
//! an optional JSON file (`--config`), then flags, and writes the resolved
//! configuration next to its outputs. Exit codes: 0 on success (including
//! warnings), 2 on argument or validation errors, 3 on runtime failures.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::datagen::{FieldKind, WakeMode};
use crate::error::Error;
use config::Case;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dyncgan", version, about = "Dyn-cGAN flow surrogate: data generation, training, prediction, evaluation")]
pub struct Cli {
    /// JSON configuration for the subcommand; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Reynolds-sweep dataset with the wake or cavity generator.
    GenData(GenDataArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Roll a trained model out at one Reynolds number.
    Predict(PredictArgs),
    /// Score a model against a dataset: error maps, probes, Reynolds sweep.
    Evaluate(EvaluateArgs),
    /// Train once per training horizon and compare long rollouts.
    HorizonStudy(HorizonStudyArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub case: Option<Case>,
    #[arg(long)]
    pub re_min: Option<f64>,
    #[arg(long)]
    pub re_max: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Stored snapshots per sample.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Grid as NYxNX, both divisible by 8.
    #[arg(long, value_parser = parse_grid, value_name = "NYxNX")]
    pub grid: Option<[usize; 2]>,
    /// u, v or w.
    #[arg(long, value_parser = parse_field)]
    pub field: Option<FieldKind>,
    /// Snapshot interval.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Wake regime: steady or transient.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<WakeMode>,
}

/// Optimiser, loss and architecture flags shared by `train` and `horizon-study`.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// streamwise, transverse, transverse-transient or cavity.
    #[arg(long)]
    pub loss_preset: Option<String>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub encoder_layers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub dynamics_layers: Option<Vec<usize>>,
    #[arg(long)]
    pub decoder_seed_channels: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub decoder_channels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub disc_channels: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training horizon T.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Train without every N-th sample (see `evaluate --holdout-every`).
    #[arg(long)]
    pub holdout_every: Option<usize>,
    #[arg(long)]
    pub holdout_offset: Option<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub re: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Time indices written as PGM images, e.g. 0,24,49.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Probe nodes as i,j pairs (column, row), e.g. `--points 10,10 20,30`.
    #[arg(long, num_args = 1.., value_parser = parse_point, value_name = "I,J")]
    pub points: Option<Vec<[usize; 2]>>,
    /// Index of the sample whose probe series are reported.
    #[arg(long)]
    pub point_sample: Option<usize>,
    /// Frames written as error images.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<usize>>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Evaluate only every N-th sample (the part `train --holdout-every` left out).
    #[arg(long)]
    pub holdout_every: Option<usize>,
    #[arg(long)]
    pub holdout_offset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HorizonStudyArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Scoring dataset; defaults to the training data.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub eval_steps: Option<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NYxNX, got '{s}'"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
    Ok([n(a)?, n(b)?])
}

fn parse_point(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected I,J, got '{s}'"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
    Ok([n(a)?, n(b)?])
}

fn parse_field(s: &str) -> Result<FieldKind, String> {
    s.parse::<FieldKind>().map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<WakeMode, String> {
    match s {
        "steady" => Ok(WakeMode::Steady),
        "transient" => Ok(WakeMode::Transient),
        _ => Err(format!("unknown wake mode '{s}' (expected steady or transient)")),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!("\n  caused by: {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            exit_code(&e)
        }
    }
}
