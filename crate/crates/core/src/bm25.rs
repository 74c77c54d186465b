//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ unique(q)} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! The `+1` inside the logarithm keeps every idf positive, so any document
//! containing a query term scores strictly above zero.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::TokenStream;

pub const INDEX_FORMAT: &str = "lexlink-bm25/1";

#[derive(Debug, Error)]
pub enum Bm25Error {
    #[error("document {doc_index} out of range (index holds {doc_count})")]
    DocOutOfRange { doc_index: usize, doc_count: usize },
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("unsupported index format {0:?}")]
    Format(String),
    #[error("cannot read or write index {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, Bm25Error> {
        let p = Bm25Params { k1, b };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), Bm25Error> {
        if self.k1 > 0.0 && self.k1.is_finite() && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(Bm25Error::InvalidParams { k1: self.k1, b: self.b })
        }
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    format: String,
    params: Bm25Params,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

impl Bm25Index {
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = &'a TokenStream>,
    {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::new();
        for (doc, tokens) in docs.into_iter().enumerate() {
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: doc as u32,
                    tf: count,
                });
            }
            doc_lengths.push(tokens.len() as u32);
        }
        // Documents are visited in order, so each posting list is already sorted.
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        Bm25Index {
            format: INDEX_FORMAT.to_string(),
            params,
            postings,
            doc_lengths,
            avg_doc_length,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_length > 0.0 {
            doc_len as f64 / self.avg_doc_length
        } else {
            0.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    pub fn score(&self, query: &TokenStream, doc_index: usize) -> Result<f64, Bm25Error> {
        if doc_index >= self.doc_count() {
            return Err(Bm25Error::DocOutOfRange {
                doc_index,
                doc_count: self.doc_count(),
            });
        }
        let doc_len = self.doc_lengths[doc_index];
        let mut total = 0.0;
        for term in unique_terms(query) {
            let list = self.postings(term);
            if let Ok(pos) = list.binary_search_by_key(&(doc_index as u32), |p| p.doc) {
                total += self.term_weight(self.idf(term), list[pos].tf, doc_len);
            }
        }
        Ok(total)
    }

    /// Positive-scoring documents, best first, ties by ascending doc index.
    pub fn top_k(&self, query: &TokenStream, k: usize) -> Vec<ScoredDoc> {
        if k == 0 || self.doc_count() == 0 {
            return Vec::new();
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in unique_terms(query) {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in list {
                *acc.entry(p.doc).or_default() +=
                    self.term_weight(idf, p.tf, self.doc_lengths[p.doc as usize]);
            }
        }
        let mut ranked: Vec<ScoredDoc> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, score)| ScoredDoc {
                doc_index: d as usize,
                score,
            })
            .collect();
        sort_ranking(&mut ranked);
        ranked.truncate(k);
        ranked
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("in-memory serialization")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, Bm25Error> {
        let index: Bm25Index =
            serde_json::from_slice(bytes).map_err(|e| Bm25Error::Format(e.to_string()))?;
        if index.format != INDEX_FORMAT {
            return Err(Bm25Error::Format(index.format));
        }
        index.params.check()?;
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), Bm25Error> {
        crate::corpus::write_file(path, &self.to_json()).map_err(|e| Bm25Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, Bm25Error> {
        let bytes = std::fs::read(path).map_err(|e| Bm25Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&bytes)
    }
}

/// Query terms in first-occurrence order, duplicates removed.
fn unique_terms(query: &TokenStream) -> impl Iterator<Item = &str> {
    let mut seen = HashSet::new();
    query
        .iter()
        .map(String::as_str)
        .filter(move |t| seen.insert(*t))
}

pub(crate) fn sort_ranking(ranked: &mut [ScoredDoc]) {
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_index.cmp(&b.doc_index))
    });
}
