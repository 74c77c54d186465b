//! Four-way vote over the top-1 entities of AT-BM25, KB-BM25,
//! Description-BM25 and the reranker.
//!
//! Absent votes (an empty stage) are dropped from the tally. Rules, in order:
//!
//! 1. a value with multiplicity ≥ 2 strictly above every other value wins;
//! 2. two values tied at multiplicity 2: the one the reranker voted for;
//! 3. all present votes distinct: the reranker's vote, or failing that the
//!    first present of (at, kb, desc).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnsembleError {
    #[error("no stage produced a vote")]
    NoVotes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteInput {
    pub at: Option<String>,
    pub kb: Option<String>,
    pub desc: Option<String>,
    pub reranker: Option<String>,
}

impl VoteInput {
    pub fn new<S: Into<String>>(at: Option<S>, kb: Option<S>, desc: Option<S>, reranker: Option<S>) -> Self {
        VoteInput {
            at: at.map(Into::into),
            kb: kb.map(Into::into),
            desc: desc.map(Into::into),
            reranker: reranker.map(Into::into),
        }
    }

    fn present(&self) -> impl Iterator<Item = &str> {
        [&self.at, &self.kb, &self.desc, &self.reranker]
            .into_iter()
            .filter_map(|v| v.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    Majority,
    RerankerFallback,
    PairWithReranker,
    OnlyAvailable,
}

impl DecidedBy {
    pub const ALL: [DecidedBy; 4] = [
        DecidedBy::Majority,
        DecidedBy::RerankerFallback,
        DecidedBy::PairWithReranker,
        DecidedBy::OnlyAvailable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecidedBy::Majority => "majority",
            DecidedBy::RerankerFallback => "reranker_fallback",
            DecidedBy::PairWithReranker => "pair_with_reranker",
            DecidedBy::OnlyAvailable => "only_available",
        }
    }
}

impl fmt::Display for DecidedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub entity_id: String,
    pub decided_by: DecidedBy,
}

pub fn vote(v: &VoteInput) -> Result<Prediction, EnsembleError> {
    // (value, multiplicity) in first-seen order; at most four entries.
    let mut tally: Vec<(&str, usize)> = Vec::with_capacity(4);
    for x in v.present() {
        match tally.iter_mut().find(|(y, _)| *y == x) {
            Some((_, n)) => *n += 1,
            None => tally.push((x, 1)),
        }
    }
    if tally.is_empty() {
        return Err(EnsembleError::NoVotes);
    }
    let top = tally.iter().map(|t| t.1).max().unwrap_or(0);
    let leaders: Vec<&str> = tally.iter().filter(|t| t.1 == top).map(|t| t.0).collect();
    let pick = |id: &str, by| Prediction {
        entity_id: id.to_string(),
        decided_by: by,
    };

    if top >= 2 && leaders.len() == 1 {
        return Ok(pick(leaders[0], DecidedBy::Majority));
    }
    if top == 2 && leaders.len() == 2 {
        // A 2:2 split uses all four votes, so the reranker is present and on one side.
        let r = v.reranker.as_deref().expect("2:2 split implies four votes");
        return Ok(pick(r, DecidedBy::PairWithReranker));
    }
    match v.reranker.as_deref() {
        Some(r) => Ok(pick(r, DecidedBy::RerankerFallback)),
        None => Ok(pick(tally[0].0, DecidedBy::OnlyAvailable)),
    }
}
