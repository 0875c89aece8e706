//! `claimlab`: mining, language model stages, classifier training,
//! cross-validated evaluation, significance tests and corpus retrieval.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "claimlab", version, about = "Claim detection with opinion-corpus language model fine-tuning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every stochastic step [default: 42, or the config file's seed]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Report style on standard output
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract IMO/IMHO opinion sentences from newline-delimited JSON comment dumps
    Mine(MineArgs),
    /// Build a vocabulary from one or more corpora
    Vocab(VocabArgs),
    /// Train a general-domain language model from scratch
    Pretrain(PretrainArgs),
    /// Continue training a general language model on the opinion corpus
    FinetuneLm(FinetuneArgs),
    /// Fine-tune a claim classifier on top of a language model
    TrainClf(TrainClfArgs),
    /// Repeated stratified cross-validation of one system
    Evaluate(EvaluateArgs),
    /// Chi-squared test between two prediction files
    Significance(SignificanceArgs),
    /// TF-IDF nearest neighbours of a sentence within a corpus
    Neighbors(NeighborsArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Comment dumps (`.gz` is decompressed)
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the sentence text only, one per line
    #[arg(long)]
    pub plain: bool,
    /// Drop exact duplicate sentences
    #[arg(long)]
    pub dedupe: bool,
    /// Minimum word tokens per sentence
    #[arg(long, default_value_t = claimlab::corpus::DEFAULT_MIN_TOKENS)]
    pub min_tokens: usize,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Mined TSV or plain one-sentence-per-line files
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = claimlab::text::DEFAULT_MAX_VOCAB)]
    pub max_size: usize,
    #[arg(long, default_value_t = claimlab::text::DEFAULT_MIN_FREQ)]
    pub min_freq: u64,
}

/// Stage settings; flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct StageArgs {
    /// Stage config JSON
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub bptt_len: Option<usize>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    SlantedTriangular,
}

/// Encoder architecture for models built from scratch.
#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    #[arg(long, default_value_t = 100)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden_size: usize,
    #[arg(long, default_value_t = 3)]
    pub num_layers: usize,
    /// Share the embedding matrix with the decoder
    #[arg(long)]
    pub tie_weights: bool,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
}

#[derive(Debug, Clone, Args)]
pub struct HeadArgs {
    #[arg(long, value_enum, default_value_t = PoolingArg::Concat)]
    pub pooling: PoolingArg,
    #[arg(long, default_value_t = claimlab::pipeline::DEFAULT_HEAD_HIDDEN)]
    pub head_hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Concat,
    Final,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint path; the vocabulary is copied to `<out>.vocab.tsv`
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// General-stage checkpoint
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Target vocabulary [default: the general model's]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    /// General- or opinion-stage checkpoint
    #[arg(long)]
    pub lm: PathBuf,
    /// Labelled TSV `label<TAB>text`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("system").required(true).args(["lm", "random_init", "majority"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Folds TSV; created with `--k` folds when missing
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Initialize every fold's encoder from this language model
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Initialize every fold's encoder randomly (needs `--vocab`)
    #[arg(long, requires = "vocab")]
    pub random_init: bool,
    /// Majority-class baseline
    #[arg(long)]
    pub majority: bool,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Report JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run-0 held-out predictions, TSV `example_index<TAB>gold<TAB>prediction`
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub stage: StageArgs,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    /// Labelled TSV the predictions refer to
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions of system A
    #[arg(long)]
    pub a: PathBuf,
    /// Predictions of system B
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    /// Corpus to search
    #[arg(long)]
    pub index: PathBuf,
    /// Query sentence, or a file with one query per line
    #[arg(long)]
    pub query: String,
    #[arg(short = 'k', default_value_t = 5)]
    pub k: usize,
    /// Ignore features occurring in fewer documents
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Mine(a) => commands::mine(g, a),
        Command::Vocab(a) => commands::vocab(g, a),
        Command::Pretrain(a) => commands::pretrain(g, a),
        Command::FinetuneLm(a) => commands::finetune_lm(g, a),
        Command::TrainClf(a) => commands::train_clf(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::Significance(a) => commands::significance(g, a),
        Command::Neighbors(a) => commands::neighbors(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match g.format {
                Format::Json => eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") })),
                Format::Table => eprintln!("error: {e:#}"),
            }
            ExitCode::from(1)
        }
    }
}
