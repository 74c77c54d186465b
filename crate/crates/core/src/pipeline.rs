//! Full retrieve → rerank → vote pipeline, plus the ablation variants.

use std::fmt;

use serde::Serialize;

use crate::corpus::{KnowledgeBase, MentionRecord};
use crate::ensemble::{vote, DecidedBy, Prediction, VoteInput};
use crate::exec::Execution;
use crate::reranker::{rerank, DualEncoder, EntityEmbeddingStore, RerankError};
use crate::retriever::{rerank_candidates, RetrievalResult, Retriever, RetrieverConfig, StageMask};

/// A pipeline configuration with at most one component removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    Full,
    WithoutEnsemble,
    WithoutAt,
    WithoutKb,
    WithoutDesc,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [
        Variant::WithoutEnsemble,
        Variant::WithoutAt,
        Variant::WithoutKb,
        Variant::WithoutDesc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full system",
            Variant::WithoutEnsemble => "w/o Ensemble",
            Variant::WithoutAt => "w/o AT-BM25",
            Variant::WithoutKb => "w/o KB-BM25",
            Variant::WithoutDesc => "w/o Description-BM25",
        }
    }

    fn stages(self) -> StageMask {
        let mut s = StageMask::default();
        match self {
            Variant::WithoutAt => s.at = false,
            Variant::WithoutKb => s.kb = false,
            Variant::WithoutDesc => s.desc = false,
            Variant::Full | Variant::WithoutEnsemble => {}
        }
        s
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How the final entity was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Vote(DecidedBy),
    /// Ensemble disabled: reranker top-1 taken as is.
    RerankerOnly,
    /// Nothing to choose from.
    Undecided,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Vote(d) => d.as_str(),
            Decision::RerankerOnly => "reranker_only",
            Decision::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutput {
    pub doc_id: String,
    pub retrieval: RetrievalResult,
    pub reranked: Vec<(String, f64)>,
    pub votes: VoteInput,
    pub entity_id: Option<String>,
    pub decision: Decision,
}

impl LinkOutput {
    pub fn prediction(&self) -> Option<Prediction> {
        match (&self.entity_id, self.decision) {
            (Some(id), Decision::Vote(by)) => Some(Prediction {
                entity_id: id.clone(),
                decided_by: by,
            }),
            _ => None,
        }
    }
}

pub struct Linker {
    kb: KnowledgeBase,
    retriever: Retriever,
    model: DualEncoder,
    store: EntityEmbeddingStore,
    cfg: RetrieverConfig,
}

impl Linker {
    pub fn new(
        kb: KnowledgeBase,
        retriever: Retriever,
        model: DualEncoder,
        store: EntityEmbeddingStore,
        cfg: RetrieverConfig,
    ) -> Result<Self, RerankError> {
        store.check_fresh(&kb)?;
        if store.dim() != model.config().dim {
            return Err(RerankError::DimensionMismatch(store.dim(), model.config().dim));
        }
        Ok(Linker {
            kb,
            retriever,
            model,
            store,
            cfg,
        })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn retriever(&self) -> &Retriever {
        &self.retriever
    }

    pub fn model(&self) -> &DualEncoder {
        &self.model
    }

    pub fn store(&self) -> &EntityEmbeddingStore {
        &self.store
    }

    pub fn config(&self) -> &RetrieverConfig {
        &self.cfg
    }

    pub fn link(&self, m: &MentionRecord, variant: Variant) -> Result<LinkOutput, RerankError> {
        let cfg = RetrieverConfig {
            stages: variant.stages(),
            ..self.cfg
        };
        let retrieval = self.retriever.retrieve(&self.kb, m, &cfg);
        let reranked = rerank(&self.model, &self.store, m, &rerank_candidates(&retrieval))?;
        let votes = VoteInput {
            at: retrieval.top1_at.clone(),
            kb: retrieval.top1_kb.clone(),
            desc: retrieval.top1_desc.clone(),
            reranker: reranked.first().map(|(id, _)| id.clone()),
        };
        let (entity_id, decision) = if variant == Variant::WithoutEnsemble {
            match &votes.reranker {
                Some(id) => (Some(id.clone()), Decision::RerankerOnly),
                None => (None, Decision::Undecided),
            }
        } else {
            match vote(&votes) {
                Ok(p) => (Some(p.entity_id), Decision::Vote(p.decided_by)),
                Err(_) => (None, Decision::Undecided),
            }
        };
        Ok(LinkOutput {
            doc_id: m.doc_id.clone(),
            retrieval,
            reranked,
            votes,
            entity_id,
            decision,
        })
    }

    pub fn link_all(
        &self,
        records: &[MentionRecord],
        variant: Variant,
        exec: Execution,
    ) -> Result<Vec<LinkOutput>, RerankError> {
        exec.try_map(records, |m| self.link(m, variant))
    }
}

#[derive(Serialize)]
struct VotesLine<'a> {
    at: Option<&'a str>,
    kb: Option<&'a str>,
    desc: Option<&'a str>,
    reranker: Option<&'a str>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    doc_id: &'a str,
    pred_id: Option<&'a str>,
    decided_by: &'static str,
    cand1: &'a [String],
    cand2: &'a [String],
    votes: VotesLine<'a>,
}

/// One JSON line per mention: doc_id, pred_id, decided_by, cand1, cand2, votes.
pub fn predictions_jsonl(outputs: &[LinkOutput]) -> Vec<u8> {
    let mut buf = Vec::new();
    for o in outputs {
        let line = PredictionLine {
            doc_id: &o.doc_id,
            pred_id: o.entity_id.as_deref(),
            decided_by: o.decision.as_str(),
            cand1: o.retrieval.cand1.ids(),
            cand2: o.retrieval.cand2.ids(),
            votes: VotesLine {
                at: o.votes.at.as_deref(),
                kb: o.votes.kb.as_deref(),
                desc: o.votes.desc.as_deref(),
                reranker: o.votes.reranker.as_deref(),
            },
        };
        serde_json::to_writer(&mut buf, &line).expect("in-memory serialization");
        buf.push(b'\n');
    }
    buf
}
