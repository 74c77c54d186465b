mod commands;
mod config;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexlink::bm25::Bm25Error;
use lexlink::corpus::CorpusError;
use lexlink::eval::EvalError;
use lexlink::reranker::RerankError;
use lexlink::retriever::RetrieverError;
use thiserror::Error;

use crate::config::ConfigFile;
use crate::settings::Settings;

/// `Io` exits with status 1, `Data` with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<RerankError> for CliError {
    fn from(e: RerankError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<Bm25Error> for CliError {
    fn from(e: Bm25Error) -> Self {
        match e {
            Bm25Error::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RetrieverError> for CliError {
    fn from(e: RetrieverError) -> Self {
        match e {
            RetrieverError::Bm25(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Corpus(inner) => inner.into(),
            EvalError::Rerank(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lexlink", version, about = "Coarse-to-fine entity linking")]
struct Cli {
    /// Settings file of `key = value` lines; flags override it.
    #[arg(long, global = true, env = "LEXLINK_CONFIG")]
    config: Option<PathBuf>,

    /// Run seed; every component derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the alias and entity-name BM25 indexes.
    BuildIndex(Common),
    /// Train the dual encoder on labelled mentions.
    Train(Common),
    /// Precompute entity embeddings with a trained model.
    EmbedEntities(Common),
    /// Link a mentions file and write one JSON line per mention.
    Predict(Common),
    /// Write retrieval recall and end-to-end accuracy reports.
    Evaluate(Common),
    /// Compare the full system with its ablations.
    Ablate(Common),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Labelled mentions used by `train`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Labelled mentions used by `evaluate` and `ablate`.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Mentions linked by `predict`.
    #[arg(long)]
    pub mentions: Option<PathBuf>,
    #[arg(long)]
    pub index_dir: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Predictions output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,

    #[arg(long)]
    pub k_at: Option<usize>,
    #[arg(long)]
    pub k_kb: Option<usize>,
    #[arg(long)]
    pub k_desc: Option<usize>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// `all` or `top-prior`.
    #[arg(long)]
    pub alias_expansion: Option<String>,
    #[arg(long)]
    pub fine_query_tokens: Option<usize>,

    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hash_buckets: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Comma-separated character n-gram orders.
    #[arg(long)]
    pub ngram_orders: Option<String>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Cap on the per-batch gradient norm; unset means plain steps.
    #[arg(long)]
    pub max_grad_norm: Option<f64>,

    /// Variant used by `predict`: full, no-ensemble, no-at, no-kb, no-desc.
    #[arg(long)]
    pub variant: Option<String>,
    /// Ablations run by `ablate`, comma-separated, or `all`.
    #[arg(long)]
    pub ablations: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<usize>,
    /// Alias entries in total, including one per entity name.
    #[arg(long)]
    pub aliases: Option<usize>,
    #[arg(long)]
    pub mentions: Option<usize>,
    #[arg(long)]
    pub ambiguity: Option<f64>,
    #[arg(long)]
    pub tail: Option<f64>,
    /// Also write this many fresh mentions to `heldout.jsonl`.
    #[arg(long)]
    pub heldout: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = file.pick(cli.seed, "seed")?;
    let sequential = cli.sequential || file.pick_or(None, "sequential", false)?;
    type Action = fn(&Settings) -> Result<(), CliError>;
    let (common, action): (&Common, Action) = match &cli.command {
        Command::Synth(a) => return commands::synth(a, &file, seed),
        Command::BuildIndex(c) => (c, commands::build_index),
        Command::Train(c) => (c, commands::train),
        Command::EmbedEntities(c) => (c, commands::embed_entities),
        Command::Predict(c) => (c, commands::predict),
        Command::Evaluate(c) => (c, commands::evaluate),
        Command::Ablate(c) => (c, commands::ablate),
    };
    action(&Settings::resolve(common, &file, seed.unwrap_or(0), sequential)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
