use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ratt_core::training::Mode;

#[derive(Debug, Parser)]
#[command(name = "ratt", version, about = "Train, evaluate and audit rationale-supervised attention models")]
pub struct Cli {
    /// Seed for every random choice. Overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted cue words.
    GenSynthetic(GenSyntheticArgs),
    /// Turn sentence-level annotations into a relation corpus.
    Ingest(IngestArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(CheckpointArgs),
    /// Leave-one-out and rationale audit of a checkpoint's attention.
    Audit(CheckpointArgs),
    /// Train over a grid of rationale fractions and seeds.
    Sweep(SweepArgs),
    /// Serve blinded pairwise attention judgments over HTTP.
    JudgeServe(JudgeServeArgs),
    /// Aggregate collected judgments.
    JudgeReport(JudgeReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// JSON generator configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub distractor_rate: Option<f64>,
    #[arg(long)]
    pub null_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Sentence-level annotation JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Relation labels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "positive,negative")]
    pub labels: Vec<String>,
    /// Drop no-relation pairs instead of keeping them as a class.
    #[arg(long)]
    pub exclude_null: bool,
    /// Keep about this many no-relation pairs per relation.
    #[arg(long, default_value_t = 1.0)]
    pub undersample: f64,
    /// Keep every no-relation pair.
    #[arg(long, conflicts_with = "undersample")]
    pub no_undersample: bool,
}

/// Where training, dev and test instances come from: explicit files, or one
/// corpus split by a fold plan.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus JSONL (training instances, or the whole corpus with --folds).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Fold plan written by gen-synthetic or ingest.
    #[arg(long, conflicts_with_all = ["dev", "test"])]
    pub folds: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "folds")]
    pub fold: usize,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON training configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda_attn: Option<f64>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Vocabulary file, one token per line with optional embedding values.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Rationale fractions; 0 trains without rationales.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.08,0.16,0.33,1.0")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct JudgeServeArgs {
    /// Audit dump of the first system.
    #[arg(long)]
    pub audit_a: PathBuf,
    /// Audit dump of the second system.
    #[arg(long)]
    pub audit_b: PathBuf,
    /// Fold plan used to sample per fold; without it all instances form one pool.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub per_fold: usize,
    /// Both systems must be right with at least this confidence.
    #[arg(long, default_value_t = 0.5)]
    pub min_confidence: f64,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct JudgeReportArgs {
    #[arg(long)]
    pub judgments: PathBuf,
}
