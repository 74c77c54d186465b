//! Hashed character n-gram encoder.
//!
//! Each text token contributes one feature per character n-gram of the
//! configured orders; each marker contributes one reserved feature. The
//! sequence representation is the sum of the feature embeddings divided by
//! the token count, followed by an affine projection:
//!
//! ```text
//! h = (1/T) Σ_f count(f) · E[f]
//! y = W h + b
//! ```

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequence::{MarkedSequence, SeqToken};
use super::RerankError;

/// Embedding rows reserved for the three marker tokens, ahead of the hashed rows.
pub const MARKER_ROWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub hash_buckets: usize,
    pub ngram_orders: Vec<usize>,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            hash_buckets: 1 << 16,
            ngram_orders: vec![1, 2, 3],
            max_len: 128,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn check(&self) -> Result<(), RerankError> {
        let bad = |what: &str| Err(RerankError::InvalidConfig(what.to_string()));
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if self.hash_buckets < 1 {
            return bad("hash_buckets must be >= 1");
        }
        if self.max_len < 8 {
            return bad("max_len must be >= 8");
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return bad("ngram_orders must be non-empty and positive");
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.hash_buckets + MARKER_ROWS
    }
}

/// Feature rows with multiplicities, sorted by row, plus the token count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    pub rows: Vec<(usize, f64)>,
    pub tokens: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn featurize(seq: &MarkedSequence, cfg: &EncoderConfig) -> FeatureBag {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    let mut buf = String::new();
    for token in seq.tokens() {
        match token {
            SeqToken::Marker(m) => *counts.entry(m.row()).or_default() += 1.0,
            SeqToken::Text(t) => {
                let chars: Vec<char> = t.chars().collect();
                for &n in &cfg.ngram_orders {
                    for gram in chars.windows(n) {
                        buf.clear();
                        buf.extend(gram);
                        let bucket = (fnv1a(buf.as_bytes()) % cfg.hash_buckets as u64) as usize;
                        *counts.entry(MARKER_ROWS + bucket).or_default() += 1.0;
                    }
                }
            }
        }
    }
    FeatureBag {
        rows: counts.into_iter().collect(),
        tokens: seq.len(),
    }
}

/// Embedding table plus affine projection for one side of the dual encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub(crate) dim: usize,
    /// `rows × dim`, row-major.
    pub(crate) embedding: Vec<f64>,
    /// `dim × dim`, row-major: `y[i] = Σ_j projection[i*dim + j] · h[j] + bias[i]`.
    pub(crate) projection: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EncoderParams {
            dim,
            embedding: vec![0.0; rows * dim],
            projection: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
        }
    }

    /// Embedding rows uniform in ±1/√dim, projection identity plus uniform ±1e-2 noise, zero bias.
    pub fn init(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let embedding = (0..rows * dim).map(|_| rng.gen_range(-scale..=scale)).collect();
        let projection = (0..dim * dim)
            .map(|i| {
                let eye = if i / dim == i % dim { 1.0 } else { 0.0 };
                eye + rng.gen_range(-1e-2..=1e-2)
            })
            .collect();
        EncoderParams {
            dim,
            embedding,
            projection,
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.embedding.len() / self.dim
    }

    pub fn embedding_row(&self, row: usize) -> &[f64] {
        &self.embedding[row * self.dim..(row + 1) * self.dim]
    }

    pub fn embedding_row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.embedding[row * self.dim..(row + 1) * self.dim]
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        &mut self.projection
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Multiplies the projection and bias by `c`, scaling every output by `c`.
    pub fn scale_output(&mut self, c: f64) {
        self.projection.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= c);
    }

    pub fn pooled(&self, bag: &FeatureBag) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        if bag.tokens == 0 {
            return h;
        }
        for &(row, count) in &bag.rows {
            for (acc, &e) in h.iter_mut().zip(self.embedding_row(row)) {
                *acc += count * e;
            }
        }
        let inv = 1.0 / bag.tokens as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    pub fn project(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let row = &self.projection[i * d..(i + 1) * d];
                row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.bias[i]
            })
            .collect()
    }

    pub fn forward(&self, bag: &FeatureBag) -> Vec<f64> {
        self.project(&self.pooled(bag))
    }

    /// Adds `∂L/∂θ` to `grad` given `∂L/∂y` for one sequence.
    pub fn backward(&self, bag: &FeatureBag, d_out: &[f64], grad: &mut EncoderGrad) {
        let d = self.dim;
        let h = self.pooled(bag);
        for i in 0..d {
            grad.bias[i] += d_out[i];
            let g_row = &mut grad.projection[i * d..(i + 1) * d];
            for (g, &x) in g_row.iter_mut().zip(&h) {
                *g += d_out[i] * x;
            }
        }
        if bag.tokens == 0 {
            return;
        }
        let mut d_h = vec![0.0; d];
        for i in 0..d {
            let row = &self.projection[i * d..(i + 1) * d];
            for (acc, &w) in d_h.iter_mut().zip(row) {
                *acc += w * d_out[i];
            }
        }
        let inv = 1.0 / bag.tokens as f64;
        for &(row, count) in &bag.rows {
            let g = grad.embedding.entry(row).or_insert_with(|| vec![0.0; d]);
            for (acc, &x) in g.iter_mut().zip(&d_h) {
                *acc += count * inv * x;
            }
        }
    }

    pub fn apply(&mut self, grad: &EncoderGrad, learning_rate: f64) {
        for (w, g) in self.projection.iter_mut().zip(&grad.projection) {
            *w -= learning_rate * g;
        }
        for (w, g) in self.bias.iter_mut().zip(&grad.bias) {
            *w -= learning_rate * g;
        }
        for (&row, g) in &grad.embedding {
            for (w, gv) in self.embedding_row_mut(row).iter_mut().zip(g) {
                *w -= learning_rate * gv;
            }
        }
    }
}

/// Gradient with respect to one [`EncoderParams`]; embedding rows are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
    pub embedding: BTreeMap<usize, Vec<f64>>,
}

impl EncoderGrad {
    pub fn zeros(dim: usize) -> Self {
        EncoderGrad {
            projection: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
            embedding: BTreeMap::new(),
        }
    }

    pub fn embedding_entry(&self, row: usize, col: usize) -> f64 {
        self.embedding.get(&row).map_or(0.0, |g| g[col])
    }
}
