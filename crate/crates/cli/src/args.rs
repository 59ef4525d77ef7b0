use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "hatcn",
    version,
    about = "Hierarchical attention TCN: train, cross-validate and explain binary time-series classifiers",
    after_help = "Configuration precedence: command-line flags > --config file > built-in defaults.\n\
                  Exit status: 0 success, 1 usage error, 2 data error, 3 training failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic handgrip cohort (dataset CSV + annotations JSON).
    GenData(GenDataArgs),
    /// Train one model on a whole dataset and write a checkpoint and loss curve.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset (accuracy, F1, predictions).
    Eval(EvalArgs),
    /// Subject-level k-fold cross-validation with repeats, plus the RT90-5 baseline.
    Cv(CvArgs),
    /// Explain predictions: attention, relevance frequency, segments (JSON + SVG).
    Explain(ExplainArgs),
    /// Extract RT90-5 features and cross-validate the margin classifier on them.
    Baseline(BaselineArgs),
    /// Render stored cv results and explanation reports to SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Flat key-value TOML file; keys are flag names without the leading dashes.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Classification head: hatcn (attention) or tcn (last activation) [default: hatcn]
    #[arg(long, value_name = "hatcn|tcn")]
    pub model: Option<String>,
    /// Hidden conv layers K; a comma-separated list sweeps depths in cv [default: 2]
    #[arg(long, value_name = "K[,K...]")]
    pub layers: Option<String>,
    /// Filters per hidden layer C [default: 8]
    #[arg(long, value_name = "C")]
    pub channels: Option<usize>,
    /// Kernel size l [default: 50]
    #[arg(long, value_name = "L")]
    pub kernel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    /// Training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: data]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV (long or wide layout) [default: synthetic cohort]
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Initialisation and shuffling seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the loss curve [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Checkpoint path to write [default: <out>/model.bin]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to score (required)
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset CSV [default: synthetic cohort]
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Output directory for metrics and predictions [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// Dataset CSV [default: synthetic cohort]
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Number of subject-level folds [default: 10]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repeats of the whole k-fold run [default: 5]
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Master seed for folds and per-run seeds [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for folds [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Checkpoint of a trained attention model (required)
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// CSV with the series to explain (required)
    #[arg(long, value_name = "CSV")]
    pub series: Option<PathBuf>,
    /// Top fraction of layers by across-layer attention [default: 0.1]
    #[arg(long, value_name = "FRACTION")]
    pub layer_pct: Option<f64>,
    /// Top fraction of time steps by within-layer attention [default: 0.1]
    #[arg(long, value_name = "FRACTION")]
    pub step_pct: Option<f64>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Dataset CSV of raw series [default: synthetic cohort]
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Number of subject-level folds [default: 10]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fold seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Directory written by cv or explain (required)
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Output directory for SVG files [default: the --data directory]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}
