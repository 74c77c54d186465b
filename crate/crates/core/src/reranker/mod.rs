//! Dual-encoder reranker.
//!
//! Mentions are encoded from their marker-annotated context, entities from
//! `name ⟨NAME_DESC⟩ description`, each by its own encoder. A mention/entity
//! pair scores as the dot product of the two vectors. Training minimizes
//! cross-entropy of the gold entity against sampled negatives.

mod artifact;
mod encoder;
mod sequence;
mod store;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{EntityRecord, KnowledgeBase, MentionRecord};
use crate::retriever::CandidateSet;

pub use encoder::{featurize, EncoderConfig, EncoderGrad, EncoderParams, FeatureBag, MARKER_ROWS};
pub use sequence::{build_entity_sequence, build_mention_sequence, MarkedSequence, Marker, Role, SeqToken};
pub use store::EntityEmbeddingStore;
pub use train::{build_examples, dataset_loss, train, train_from, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("mention span in {doc_id:?} needs {tokens} tokens, above max_len {max_len}")]
    MentionTooLong { doc_id: String, tokens: usize, max_len: usize },
    #[error("name of {entity_id:?} needs {tokens} tokens, above max_len {max_len}")]
    NameTooLong { entity_id: String, tokens: usize, max_len: usize },
    #[error("invalid mention span in {0:?}")]
    InvalidSpan(String),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("training record {0:?} has no gold entity in the knowledge base")]
    MissingGold(String),
    #[error("knowledge base is empty")]
    EmptyKb,
    #[error("candidate {0:?} is not in the embedding store")]
    UnknownCandidate(String),
    #[error("embedding store is stale: built for knowledge base {stored}, current is {current}")]
    StaleStore { stored: String, current: String },
    #[error("bad artifact: {0}")]
    Artifact(String),
    #[error("cannot read or write {path}: {reason}")]
    Io { path: String, reason: String },
}

impl RerankError {
    pub fn is_io(&self) -> bool {
        matches!(self, RerankError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Mention,
    Entity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    cfg: EncoderConfig,
    mention: EncoderParams,
    entity: EncoderParams,
}

impl DualEncoder {
    /// Seeded random initialization. The two encoders draw from separate streams.
    pub fn new(cfg: EncoderConfig) -> Result<Self, RerankError> {
        cfg.check()?;
        let mut rng_m = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, 1));
        let mut rng_e = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, 2));
        Ok(DualEncoder {
            mention: EncoderParams::init(cfg.rows(), cfg.dim, &mut rng_m),
            entity: EncoderParams::init(cfg.rows(), cfg.dim, &mut rng_e),
            cfg,
        })
    }

    pub fn zeros(cfg: EncoderConfig) -> Result<Self, RerankError> {
        cfg.check()?;
        Ok(DualEncoder {
            mention: EncoderParams::zeros(cfg.rows(), cfg.dim),
            entity: EncoderParams::zeros(cfg.rows(), cfg.dim),
            cfg,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn params(&self, side: Side) -> &EncoderParams {
        match side {
            Side::Mention => &self.mention,
            Side::Entity => &self.entity,
        }
    }

    pub fn params_mut(&mut self, side: Side) -> &mut EncoderParams {
        match side {
            Side::Mention => &mut self.mention,
            Side::Entity => &mut self.entity,
        }
    }

    pub fn encode(&self, seq: &MarkedSequence) -> Vec<f64> {
        let side = match seq.role() {
            Role::Mention => Side::Mention,
            Role::Entity => Side::Entity,
        };
        self.params(side).forward(&featurize(seq, &self.cfg))
    }

    pub fn encode_mention(&self, m: &MentionRecord) -> Result<Vec<f64>, RerankError> {
        Ok(self.encode(&build_mention_sequence(m, &self.cfg)?))
    }

    pub fn encode_entity(&self, e: &EntityRecord) -> Result<Vec<f64>, RerankError> {
        Ok(self.encode(&build_entity_sequence(e, &self.cfg)?))
    }

    /// Loss of one example and its gradient with respect to both encoders.
    pub fn loss_and_grad(&self, ex: &Example) -> (f64, EncoderGrad, EncoderGrad) {
        let y_m = self.mention.forward(&ex.mention);
        let y_es: Vec<Vec<f64>> = ex.candidates.iter().map(|b| self.entity.forward(b)).collect();
        let scores: Vec<f64> = y_es.iter().map(|y_e| dot(&y_m, y_e)).collect();
        let (loss, probs) = softmax_cross_entropy(&scores, ex.gold);

        let dim = self.cfg.dim;
        let mut g_m = EncoderGrad::zeros(dim);
        let mut g_e = EncoderGrad::zeros(dim);
        let mut d_ym = vec![0.0; dim];
        for (k, (y_e, bag)) in y_es.iter().zip(&ex.candidates).enumerate() {
            let g = probs[k] - if k == ex.gold { 1.0 } else { 0.0 };
            for (acc, &v) in d_ym.iter_mut().zip(y_e) {
                *acc += g * v;
            }
            let d_ye: Vec<f64> = y_m.iter().map(|&v| g * v).collect();
            self.entity.backward(bag, &d_ye, &mut g_e);
        }
        self.mention.backward(&ex.mention, &d_ym, &mut g_m);
        (loss, g_m, g_e)
    }

    pub fn loss(&self, ex: &Example) -> f64 {
        let y_m = self.mention.forward(&ex.mention);
        let scores: Vec<f64> = ex
            .candidates
            .iter()
            .map(|b| dot(&y_m, &self.entity.forward(b)))
            .collect();
        softmax_cross_entropy(&scores, ex.gold).0
    }
}

/// One training instance: a mention, its candidate entities, and the gold position.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub mention: FeatureBag,
    pub candidates: Vec<FeatureBag>,
    pub gold: usize,
}

impl Example {
    pub fn new(cfg: &EncoderConfig, mention: &MarkedSequence, candidates: &[MarkedSequence], gold: usize) -> Self {
        Example {
            mention: featurize(mention, cfg),
            candidates: candidates.iter().map(|c| featurize(c, cfg)).collect(),
            gold,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn score_pair(y_m: &[f64], y_e: &[f64]) -> Result<f64, RerankError> {
    if y_m.len() != y_e.len() {
        return Err(RerankError::DimensionMismatch(y_m.len(), y_e.len()));
    }
    Ok(dot(y_m, y_e))
}

/// `−log softmax(scores)[gold]` and the softmax distribution.
pub fn softmax_cross_entropy(scores: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = max + z.ln() - scores[gold];
    (loss, exps.into_iter().map(|e| e / z).collect())
}

/// Candidates ranked by score, ties by ascending entity id.
pub fn rerank(
    model: &DualEncoder,
    store: &EntityEmbeddingStore,
    m: &MentionRecord,
    candidates: &CandidateSet,
) -> Result<Vec<(String, f64)>, RerankError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let y_m = model.encode_mention(m)?;
    let mut ranked = candidates
        .iter()
        .map(|id| {
            let y_e = store.get(id).ok_or_else(|| RerankError::UnknownCandidate(id.clone()))?;
            Ok((id.clone(), score_pair(&y_m, y_e)?))
        })
        .collect::<Result<Vec<_>, RerankError>>()?;
    sort_scored(&mut ranked);
    Ok(ranked)
}

/// Same ranking as [`rerank`] but encodes each candidate entity on the spot.
pub fn rerank_on_the_fly(
    model: &DualEncoder,
    kb: &KnowledgeBase,
    m: &MentionRecord,
    candidates: &CandidateSet,
) -> Result<Vec<(String, f64)>, RerankError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let y_m = model.encode_mention(m)?;
    let mut ranked = candidates
        .iter()
        .map(|id| {
            let e = kb.get(id).ok_or_else(|| RerankError::UnknownCandidate(id.clone()))?;
            Ok((id.clone(), score_pair(&y_m, &model.encode_entity(e)?)?))
        })
        .collect::<Result<Vec<_>, RerankError>>()?;
    sort_scored(&mut ranked);
    Ok(ranked)
}

fn sort_scored(ranked: &mut [(String, f64)]) {
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}
