//! Precomputed entity embeddings and model files.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::artifact;
use super::{DualEncoder, EncoderConfig, EncoderParams, RerankError};
use crate::corpus::KnowledgeBase;
use crate::exec::Execution;

const STORE_MAGIC: &[u8; 4] = b"LXLS";
const MODEL_MAGIC: &[u8; 4] = b"LXLM";

/// One `y_e` per knowledge-base entity, in knowledge-base order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityEmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>,
    fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    dim: usize,
    rows: usize,
    kb_fingerprint: String,
    ids: Vec<String>,
}

impl EntityEmbeddingStore {
    pub fn precompute(model: &DualEncoder, kb: &KnowledgeBase, exec: Execution) -> Result<Self, RerankError> {
        let rows = exec.try_map(kb.entities(), |e| model.encode_entity(e))?;
        let ids: Vec<String> = kb.entities().iter().map(|e| e.id.clone()).collect();
        Ok(Self::assemble(model.config().dim, ids, rows.concat(), kb.fingerprint().to_string()))
    }

    fn assemble(dim: usize, ids: Vec<String>, values: Vec<f64>, fingerprint: String) -> Self {
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        EntityEmbeddingStore {
            dim,
            ids,
            index,
            values,
            fingerprint,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Fails when the store was built for a different knowledge base.
    pub fn check_fresh(&self, kb: &KnowledgeBase) -> Result<(), RerankError> {
        if self.fingerprint != kb.fingerprint() {
            return Err(RerankError::StaleStore {
                stored: self.fingerprint.clone(),
                current: kb.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = StoreHeader {
            dim: self.dim,
            rows: self.ids.len(),
            kb_fingerprint: self.fingerprint.clone(),
            ids: self.ids.clone(),
        };
        artifact::encode(STORE_MAGIC, &header, &[&self.values])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RerankError> {
        let d = artifact::decode::<StoreHeader>(STORE_MAGIC, bytes)?;
        let h = d.header;
        if h.ids.len() != h.rows || d.payload.len() != h.rows * h.dim {
            return Err(RerankError::Artifact("store row count does not match payload".into()));
        }
        Ok(Self::assemble(h.dim, h.ids, d.payload, h.kb_fingerprint))
    }

    pub fn save(&self, path: &Path) -> Result<(), RerankError> {
        artifact::write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, RerankError> {
        Self::from_bytes(&artifact::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    encoder: EncoderConfig,
    rows: usize,
}

impl DualEncoder {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            encoder: self.cfg.clone(),
            rows: self.cfg.rows(),
        };
        let (m, e) = (&self.mention, &self.entity);
        artifact::encode(
            MODEL_MAGIC,
            &header,
            &[&m.embedding, &m.projection, &m.bias, &e.embedding, &e.projection, &e.bias],
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RerankError> {
        let d = artifact::decode::<ModelHeader>(MODEL_MAGIC, bytes)?;
        let cfg = d.header.encoder;
        cfg.check()?;
        let (rows, dim) = (cfg.rows(), cfg.dim);
        if d.header.rows != rows || d.payload.len() != 2 * (rows * dim + dim * dim + dim) {
            return Err(RerankError::Artifact("model payload size does not match its config".into()));
        }
        let mut it = d.payload.into_iter();
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let mut side = || EncoderParams {
            dim,
            embedding: take(rows * dim),
            projection: take(dim * dim),
            bias: take(dim),
        };
        let mention = side();
        let entity = side();
        Ok(DualEncoder { cfg, mention, entity })
    }

    pub fn save(&self, path: &Path) -> Result<(), RerankError> {
        artifact::write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, RerankError> {
        Self::from_bytes(&artifact::read(path)?)
    }
}
