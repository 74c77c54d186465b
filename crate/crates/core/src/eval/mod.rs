//! Recall and accuracy reports, ablation runs, and synthetic corpora.

mod ablation;
mod metrics;
mod synth;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::reranker::RerankError;

pub use ablation::{run_ablation, reranker_accuracy};
pub use metrics::{accuracy, accuracy_table, recall_at_k, AccuracyReport, RecallAtK, RecallReport, StageRecall, RECALL_CUTOFFS};
pub use synth::{generate_synthetic, SynthCorpus, SynthSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} gold ids")]
    LengthMismatch(usize, usize),
    #[error("recall is not monotone in k for stage {0}")]
    NonMonotoneRecall(String),
    #[error("mention {0:?} has no gold id")]
    MissingGold(String),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
}

/// Gold ids of `records`, failing on the first record without one.
pub fn gold_ids(records: &[crate::corpus::MentionRecord]) -> Result<Vec<String>, EvalError> {
    ablation::golds(records)
}
