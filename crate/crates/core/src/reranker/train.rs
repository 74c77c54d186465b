//! Mini-batch gradient descent on the candidate cross-entropy loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_entity_sequence, build_mention_sequence, DualEncoder, EncoderConfig, EncoderGrad, Example,
    RerankError, Side,
};
use crate::corpus::{Dataset, KnowledgeBase};
use crate::exec::Execution;
use crate::retriever::{rerank_candidates, Retriever, RetrieverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_example: usize,
    /// Rescales each batch gradient to at most this global L2 norm.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 1,
            batch_size: 64,
            negatives_per_example: 7,
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), RerankError> {
        if !(self.learning_rate > 0.0)
            || self.epochs == 0
            || self.batch_size == 0
            || self.negatives_per_example == 0
            || self.max_grad_norm.is_some_and(|c| !(c > 0.0))
        {
            return Err(RerankError::InvalidConfig(
                "learning_rate, epochs, batch_size and negatives_per_example must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    pub steps: usize,
    /// Mean loss over all examples before the first update.
    pub initial_loss: f64,
    /// Mean loss over all examples after the last update.
    pub final_loss: f64,
}

/// Gold entity at position 0 followed by up to `negatives_per_example`
/// negatives: retrieved candidates first, then uniform draws from the KB.
pub fn build_examples(
    ds: &Dataset,
    kb: &KnowledgeBase,
    retriever: &Retriever,
    rcfg: &RetrieverConfig,
    tc: &TrainConfig,
    ec: &EncoderConfig,
    exec: Execution,
) -> Result<Vec<Example>, RerankError> {
    if kb.is_empty() {
        return Err(RerankError::EmptyKb);
    }
    let golds = ds
        .records
        .iter()
        .map(|r| {
            r.gold_id
                .as_deref()
                .and_then(|g| kb.position(g))
                .ok_or_else(|| RerankError::MissingGold(r.doc_id.clone()))
        })
        .collect::<Result<Vec<usize>, _>>()?;

    let retrieved = exec.map(&ds.records, |r| rerank_candidates(&retriever.retrieve(kb, r, rcfg)));
    let entity_seqs = exec.try_map(kb.entities(), |e| build_entity_sequence(e, ec))?;

    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(tc.seed, 3));
    let want = tc.negatives_per_example.min(kb.len() - 1);
    let mut examples = Vec::with_capacity(ds.len());
    for ((record, &gold), cands) in ds.records.iter().zip(&golds).zip(&retrieved) {
        let mut chosen = vec![gold];
        for id in cands.iter() {
            if chosen.len() > want {
                break;
            }
            let pos = kb.position(id).expect("retriever only returns KB ids");
            if !chosen.contains(&pos) {
                chosen.push(pos);
            }
        }
        while chosen.len() <= want {
            let pos = rng.gen_range(0..kb.len());
            if !chosen.contains(&pos) {
                chosen.push(pos);
            }
        }
        let mention = build_mention_sequence(record, ec)?;
        let cand_seqs: Vec<_> = chosen.iter().map(|&p| entity_seqs[p].clone()).collect();
        examples.push(Example::new(ec, &mention, &cand_seqs, 0));
    }
    Ok(examples)
}

pub fn dataset_loss(model: &DualEncoder, examples: &[Example], exec: Execution) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let losses = exec.map(examples, |ex| model.loss(ex));
    losses.iter().sum::<f64>() / examples.len() as f64
}

/// Trains a freshly initialized encoder.
pub fn train(
    ds: &Dataset,
    kb: &KnowledgeBase,
    retriever: &Retriever,
    rcfg: &RetrieverConfig,
    tc: &TrainConfig,
    ec: &EncoderConfig,
) -> Result<(DualEncoder, TrainReport), RerankError> {
    let model = DualEncoder::new(ec.clone())?;
    let examples = build_examples(ds, kb, retriever, rcfg, tc, ec, Execution::default())?;
    train_from(model, &examples, tc)
}

/// Runs `tc.epochs` passes of shuffled mini-batch descent over `examples`.
pub fn train_from(
    mut model: DualEncoder,
    examples: &[Example],
    tc: &TrainConfig,
) -> Result<(DualEncoder, TrainReport), RerankError> {
    tc.check()?;
    let exec = Execution::default();
    let initial_loss = dataset_loss(&model, examples, exec);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(tc.seed, 4));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let dim = model.config().dim;
    let mut steps = 0;
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(tc.batch_size) {
            let mut g_m = EncoderGrad::zeros(dim);
            let mut g_e = EncoderGrad::zeros(dim);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (_, gm, ge) = model.loss_and_grad(&examples[i]);
                accumulate(&mut g_m, &gm, scale);
                accumulate(&mut g_e, &ge, scale);
            }
            let mut lr = tc.learning_rate;
            if let Some(cap) = tc.max_grad_norm {
                let norm = (sq_norm(&g_m) + sq_norm(&g_e)).sqrt();
                if norm > cap {
                    lr *= cap / norm;
                }
            }
            model.params_mut(Side::Mention).apply(&g_m, lr);
            model.params_mut(Side::Entity).apply(&g_e, lr);
            steps += 1;
        }
        log::debug!("epoch {} done, {steps} steps", epoch + 1);
    }
    let final_loss = dataset_loss(&model, examples, exec);
    Ok((
        model,
        TrainReport {
            examples: examples.len(),
            steps,
            initial_loss,
            final_loss,
        },
    ))
}

fn sq_norm(g: &EncoderGrad) -> f64 {
    g.projection
        .iter()
        .chain(&g.bias)
        .chain(g.embedding.values().flatten())
        .map(|v| v * v)
        .sum()
}

fn accumulate(total: &mut EncoderGrad, g: &EncoderGrad, scale: f64) {
    for (t, v) in total.projection.iter_mut().zip(&g.projection) {
        *t += scale * v;
    }
    for (t, v) in total.bias.iter_mut().zip(&g.bias) {
        *t += scale * v;
    }
    for (&row, v) in &g.embedding {
        let t = total.embedding.entry(row).or_insert_with(|| vec![0.0; v.len()]);
        for (a, b) in t.iter_mut().zip(v) {
            *a += scale * b;
        }
    }
}
