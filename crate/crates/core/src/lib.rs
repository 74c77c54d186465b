//! Entity linking with a coarse-to-fine lexical retriever, a dual-encoder
//! reranker and a four-way vote.
//!
//! The retriever takes candidates from BM25 over alias strings and over
//! entity names, merges them, then re-ranks the merged set by BM25 between
//! the mention's document and each candidate description. The dual encoder
//! rescores the union, and [`ensemble::vote`] combines the three retriever
//! top-1s with the reranker's.

pub mod bm25;
pub mod corpus;
pub mod ensemble;
pub mod eval;
pub mod exec;
pub mod pipeline;
pub mod reranker;
pub mod retriever;
pub mod tokenizer;

pub use corpus::{AliasTable, Dataset, EntityRecord, KnowledgeBase, MentionRecord, Split};
pub use exec::Execution;
pub use pipeline::{Linker, Variant};
pub use retriever::{Retriever, RetrieverConfig};

/// Derives an independent sub-seed for one component from the run seed (SplitMix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
