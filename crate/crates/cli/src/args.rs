use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use neurocap_core::{EmbedderKind, Mechanism};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "neurocap",
    version,
    about = "Attention caption decoders for describing network units"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic JSON-Lines dataset and print its statistics.
    GenData(GenDataArgs),
    /// Train one mechanism; writes checkpoints, history and a report.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Print gold annotations next to the generated caption for one unit.
    Caption(CaptionArgs),
    /// Train and compare all four mechanisms under one configuration.
    Compare(TrainArgs),
    /// Re-run a command from its manifest.json.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// JSON-Lines dataset files, concatenated in order.
    #[arg(long = "data", num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Generate the data in memory from a preset: alexnet | resnet152 | biggan | compound.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub preset: Option<String>,
    /// Synthetic spec as JSON (alternative to --preset).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training configuration as JSON; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mechanism: Option<Mechanism>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Rerank beam candidates by PMI in the final report.
    #[arg(long)]
    pub pmi: bool,
    #[arg(long)]
    pub embedder: Option<EmbedderKind>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed for preset data and the random embedder.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail unless the checkpoint was trained with this mechanism.
    #[arg(long)]
    pub mechanism: Option<Mechanism>,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long)]
    pub pmi: bool,
    /// Language model for --pmi; defaults to lm.json beside the checkpoint.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub pmi_lambda: f64,
    #[arg(long, default_value = "onehot")]
    pub embedder: EmbedderKind,
    #[arg(long, default_value_t = 64)]
    pub d_emb: usize,
    /// Score the gold captions themselves instead of decoding.
    #[arg(long)]
    pub oracle: bool,
    /// Directory for manifest.json, report.json and report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CaptionArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Unit ids to caption; every record when omitted.
    #[arg(long = "unit", num_args = 1..)]
    pub units: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long)]
    pub pmi: bool,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub pmi_lambda: f64,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
