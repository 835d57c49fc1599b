use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "citnet", version, about = "CNN/Transformer EEG emotion classifier with CIT interaction blocks")]
pub struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Only warnings and errors on stderr.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment recordings and write one spatial-frequency grid per window.
    Extract(ExtractArgs),
    /// Generate labelled synthetic recordings and extract them into a dataset.
    Synth(SynthArgs),
    /// Train one model variant on a grid dataset.
    Train(TrainArgs),
    /// Score a trained run on a grid dataset.
    Evaluate(EvaluateArgs),
    /// Train every variant per seed and tabulate test accuracy.
    Ablate(AblateArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
    /// Print the per-stage shape trace of a configuration.
    ShapeAudit(ShapeAuditArgs),
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Electrode layout file; defaults to the built-in 62-electrode montage.
    #[arg(long)]
    pub layout: Option<PathBuf>,

    /// Band edges in Hz, e.g. `1-4,4-8,8-14,14-31,31-50`.
    #[arg(long)]
    pub bands: Option<String>,

    /// Window length in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub window: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Recordings: `.eegb` binary, anything else is read as CSV.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub features: FeatureArgs,

    /// Sample rate of CSV inputs in Hz.
    #[arg(long, default_value_t = 200.0)]
    pub sample_rate: f64,

    /// `recording_id,label` file; ids are input file stems.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Class spec file.
    #[arg(long)]
    pub classes: PathBuf,

    #[arg(long)]
    pub per_class: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with `index.csv`.
    #[arg(long)]
    pub data: PathBuf,

    /// Experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Overrides the config's variant.
    #[arg(long)]
    pub variant: Option<String>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    /// `best` or `last`.
    #[arg(long, default_value = "best")]
    pub checkpoint: String,

    /// Directory for `eval.csv` and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: String,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Comma-separated op names, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub ops: Vec<String>,

    #[arg(long, default_value_t = 64)]
    pub precision: u32,
}

#[derive(Debug, Args)]
pub struct ShapeAuditArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Batch size of the probe input.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
}
