//! Coarse-to-fine candidate retrieval.
//!
//! The coarse layer runs two BM25 models over the mention string: one over
//! alias strings (one document per alias entry) and one over entity names.
//! Their hits are merged into `cand1`. The fine layer indexes the
//! descriptions of `cand1` and queries them with the document text to get
//! `cand2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::{Bm25Error, Bm25Index, Bm25Params};
use crate::corpus::{AliasTable, KnowledgeBase, MentionRecord};
use crate::tokenizer::{tokenize, TokenStream};

#[derive(Debug, Error)]
pub enum RetrieverError {
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
    #[error("{which} index holds {found} documents, expected {expected}")]
    IndexMismatch {
        which: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("config value {0} must be at least 1")]
    InvalidConfig(&'static str),
}

/// How an alias hit maps to entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasExpansion {
    /// Every entity in the alias bucket, highest prior first.
    #[default]
    All,
    /// Only the highest-prior entity of the bucket.
    TopPrior,
}

/// Which BM25 stages take part. Disabled stages yield no candidates and no vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMask {
    pub at: bool,
    pub kb: bool,
    pub desc: bool,
}

impl Default for StageMask {
    fn default() -> Self {
        StageMask {
            at: true,
            kb: true,
            desc: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverConfig {
    pub k_at: usize,
    pub k_kb: usize,
    pub k_desc: usize,
    pub bm25: Bm25Params,
    pub alias_expansion: AliasExpansion,
    /// Document tokens used as the fine-layer query.
    pub fine_query_tokens: usize,
    pub stages: StageMask,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        RetrieverConfig {
            k_at: 10,
            k_kb: 10,
            k_desc: 10,
            bm25: Bm25Params::default(),
            alias_expansion: AliasExpansion::All,
            fine_query_tokens: 128,
            stages: StageMask::default(),
        }
    }
}

impl RetrieverConfig {
    pub fn check(&self) -> Result<(), RetrieverError> {
        for (name, v) in [
            ("k_at", self.k_at),
            ("k_kb", self.k_kb),
            ("k_desc", self.k_desc),
            ("fine_query_tokens", self.fine_query_tokens),
        ] {
            if v == 0 {
                return Err(RetrieverError::InvalidConfig(name));
            }
        }
        self.bm25.check()?;
        Ok(())
    }
}

/// Ordered, duplicate-free list of entity ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet(Vec<String>);

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `id` unless already present. Returns whether it was added.
    pub fn push(&mut self, id: &str) -> bool {
        if self.contains(id) {
            false
        } else {
            self.0.push(id.to_string());
            true
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.iter().any(|x| x == id)
    }

    pub fn ids(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn head(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn is_subset_of(&self, other: &CandidateSet) -> bool {
        self.0.iter().all(|id| other.contains(id))
    }
}

impl<S: AsRef<str>> FromIterator<S> for CandidateSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = CandidateSet::new();
        for id in iter {
            set.push(id.as_ref());
        }
        set
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RetrievalResult {
    pub cand_at: CandidateSet,
    pub cand_kb: CandidateSet,
    pub cand1: CandidateSet,
    pub cand2: CandidateSet,
    pub top1_at: Option<String>,
    pub top1_kb: Option<String>,
    pub top1_desc: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Retriever {
    at_index: Bm25Index,
    kb_index: Bm25Index,
    aliases: AliasTable,
    entity_ids: Vec<String>,
}

impl Retriever {
    pub fn build(kb: &KnowledgeBase, at: &AliasTable, cfg: &RetrieverConfig) -> Result<Self, RetrieverError> {
        cfg.check()?;
        let alias_docs: Vec<TokenStream> = at.entries().iter().map(|e| tokenize(&e.alias)).collect();
        let name_docs: Vec<TokenStream> = kb.entities().iter().map(|e| tokenize(&e.name)).collect();
        Ok(Retriever {
            at_index: Bm25Index::build(&alias_docs, cfg.bm25),
            kb_index: Bm25Index::build(&name_docs, cfg.bm25),
            aliases: at.clone(),
            entity_ids: kb.entities().iter().map(|e| e.id.clone()).collect(),
        })
    }

    /// Reassembles a retriever from previously serialized indexes.
    pub fn from_parts(
        kb: &KnowledgeBase,
        at: &AliasTable,
        at_index: Bm25Index,
        kb_index: Bm25Index,
    ) -> Result<Self, RetrieverError> {
        if at_index.doc_count() != at.len() {
            return Err(RetrieverError::IndexMismatch {
                which: "alias",
                found: at_index.doc_count(),
                expected: at.len(),
            });
        }
        if kb_index.doc_count() != kb.len() {
            return Err(RetrieverError::IndexMismatch {
                which: "entity-name",
                found: kb_index.doc_count(),
                expected: kb.len(),
            });
        }
        Ok(Retriever {
            at_index,
            kb_index,
            aliases: at.clone(),
            entity_ids: kb.entities().iter().map(|e| e.id.clone()).collect(),
        })
    }

    pub fn at_index(&self) -> &Bm25Index {
        &self.at_index
    }

    pub fn kb_index(&self) -> &Bm25Index {
        &self.kb_index
    }

    pub fn retrieve_coarse(&self, mention: &str, cfg: &RetrieverConfig) -> (CandidateSet, CandidateSet) {
        let query = tokenize(mention);

        let mut cand_at = CandidateSet::new();
        if cfg.stages.at {
            'hits: for hit in self.at_index.top_k(&query, cfg.k_at) {
                let alias = &self.aliases.entries()[hit.doc_index].alias;
                let bucket = self.aliases.bucket(alias);
                let take = match cfg.alias_expansion {
                    AliasExpansion::All => usize::MAX,
                    AliasExpansion::TopPrior => 1,
                };
                for entry in bucket.take(take) {
                    if cand_at.len() == cfg.k_at {
                        break 'hits;
                    }
                    cand_at.push(&entry.entity_id);
                }
            }
        }

        let cand_kb = if cfg.stages.kb {
            self.kb_index
                .top_k(&query, cfg.k_kb)
                .iter()
                .map(|hit| self.entity_ids[hit.doc_index].as_str())
                .collect()
        } else {
            CandidateSet::new()
        };
        (cand_at, cand_kb)
    }

    pub fn retrieve_fine(
        &self,
        kb: &KnowledgeBase,
        doc_text: &str,
        cand1: &CandidateSet,
        cfg: &RetrieverConfig,
    ) -> CandidateSet {
        retrieve_fine(kb, doc_text, cand1, cfg)
    }

    pub fn retrieve(&self, kb: &KnowledgeBase, m: &MentionRecord, cfg: &RetrieverConfig) -> RetrievalResult {
        let (cand_at, cand_kb) = self.retrieve_coarse(&m.mention, cfg);
        let cand1 = merge_coarse(&cand_at, &cand_kb);
        let cand2 = if cfg.stages.desc {
            retrieve_fine(kb, &m.text, &cand1, cfg)
        } else {
            CandidateSet::new()
        };
        RetrievalResult {
            top1_at: cand_at.head().map(str::to_string),
            top1_kb: cand_kb.head().map(str::to_string),
            top1_desc: cand2.head().map(str::to_string),
            cand_at,
            cand_kb,
            cand1,
            cand2,
        }
    }
}

/// `cand_at` followed by members of `cand_kb` not already present.
pub fn merge_coarse(cand_at: &CandidateSet, cand_kb: &CandidateSet) -> CandidateSet {
    cand_at.iter().chain(cand_kb.iter()).collect()
}

/// Ranks `cand1` by BM25 between the document and each candidate's
/// description, using a per-call index over those descriptions.
pub fn retrieve_fine(kb: &KnowledgeBase, doc_text: &str, cand1: &CandidateSet, cfg: &RetrieverConfig) -> CandidateSet {
    if cand1.is_empty() {
        return CandidateSet::new();
    }
    let resolved: Vec<&str> = cand1
        .iter()
        .filter_map(|id| kb.get(id))
        .map(|e| e.id.as_str())
        .collect();
    let descs: Vec<TokenStream> = resolved
        .iter()
        .map(|id| tokenize(&kb.get(id).expect("resolved above").description))
        .collect();
    let index = Bm25Index::build(&descs, cfg.bm25);
    let query = tokenize(doc_text).truncated(cfg.fine_query_tokens);
    index
        .top_k(&query, cfg.k_desc)
        .iter()
        .map(|hit| resolved[hit.doc_index])
        .collect()
}

/// Union of the coarse and fine candidates, the set the reranker scores.
pub fn rerank_candidates(r: &RetrievalResult) -> CandidateSet {
    r.cand1.iter().chain(r.cand2.iter()).collect()
}
