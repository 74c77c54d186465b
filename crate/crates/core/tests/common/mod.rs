#![allow(dead_code)]

use std::collections::HashMap;

use lexlink::ensemble::{DecidedBy, VoteInput};
use lexlink::eval::{generate_synthetic, SynthCorpus, SynthSpec};
use lexlink::reranker::{
    build_entity_sequence, build_mention_sequence, DualEncoder, EncoderConfig, EntityEmbeddingStore, Example, Side,
};
use lexlink::{EntityRecord, Execution, Linker, MentionRecord, Retriever, RetrieverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores every document against `query` straight from the term counts.
pub fn bm25_reference(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = if docs.is_empty() {
        0.0
    } else {
        docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n
    };
    let mut terms: Vec<&String> = Vec::new();
    for t in query {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    docs.iter()
        .map(|d| {
            let mut s = 0.0;
            for &t in &terms {
                let f = d.iter().filter(|w| *w == t).count() as f64;
                if f == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let rel = if avgdl > 0.0 { d.len() as f64 / avgdl } else { 0.0 };
                s += idf * (f * (k1 + 1.0)) / (f + k1 * (1.0 - b + b * rel));
            }
            s
        })
        .collect()
}

/// Positive-score documents by descending score then ascending index, cut to `k`.
pub fn bm25_reference_top_k(docs: &[Vec<String>], query: &[String], k1: f64, b: f64, k: usize) -> Vec<(usize, f64)> {
    let scores = bm25_reference(docs, query, k1, b);
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().filter(|&(_, s)| s > 0.0).collect();
    ranked.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    ranked.truncate(k);
    ranked
}

/// Random token corpus over a vocabulary of `vocab` words `w0..`.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize, vocab: usize, max_len: usize) -> Vec<Vec<String>> {
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..=max_len);
            (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
        })
        .collect()
}

pub fn random_query(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
}

/// Checks an engine ranking against the reference ranking. Positions may only
/// differ among documents whose reference scores are within `tol`.
pub fn rankings_agree(got: &[(usize, f64)], want: &[(usize, f64)], all_scores: &[f64], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("length {} vs {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if (g.1 - w.1).abs() > tol {
            return Err(format!("rank {i}: score {} vs {}", g.1, w.1));
        }
        if (all_scores[g.0] - g.1).abs() > tol {
            return Err(format!("rank {i}: doc {} scored {} but reference gives {}", g.0, g.1, all_scores[g.0]));
        }
        if g.0 != w.0 && (all_scores[g.0] - all_scores[w.0]).abs() > tol {
            return Err(format!("rank {i}: doc {} vs {}", g.0, w.0));
        }
    }
    Ok(())
}

/// Vote winner decided by the shape of the multiplicity profile.
pub fn vote_reference(v: &VoteInput) -> Option<(String, DecidedBy)> {
    let slots = [&v.at, &v.kb, &v.desc, &v.reranker];
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in slots.iter().filter_map(|s| s.as_deref()) {
        *counts.entry(s).or_default() += 1;
    }
    if counts.is_empty() {
        return None;
    }
    let mut profile: Vec<usize> = counts.values().copied().collect();
    profile.sort_unstable_by(|a, b| b.cmp(a));
    let holder = |c: usize| counts.iter().find(|(_, &n)| n == c).map(|(s, _)| s.to_string());
    match profile.as_slice() {
        [4] | [3] | [3, 1] | [2] | [2, 1] | [2, 1, 1] => Some((holder(profile[0])?, DecidedBy::Majority)),
        [2, 2] => Some((v.reranker.clone()?, DecidedBy::PairWithReranker)),
        _ => match &v.reranker {
            Some(r) => Some((r.clone(), DecidedBy::RerankerFallback)),
            None => {
                let first = [&v.at, &v.kb, &v.desc].into_iter().find_map(|s| s.clone())?;
                Some((first, DecidedBy::OnlyAvailable))
            }
        },
    }
}

pub fn corpus(spec: &SynthSpec) -> SynthCorpus {
    generate_synthetic(spec).expect("feasible synthetic spec")
}

/// Corpus with no shared names and no alias-only mentions.
pub fn degenerate_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        n_entities: 60,
        n_aliases: 60,
        n_mentions: 150,
        ambiguity_rate: 0.0,
        tail_rate: 0.0,
    }
}

/// Corpus where every name is shared, so only context tokens separate the golds.
pub fn separable_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        n_entities: 40,
        n_aliases: 40,
        n_mentions: 200,
        ambiguity_rate: 1.0,
        tail_rate: 0.0,
    }
}

pub fn small_encoder(seed: u64) -> EncoderConfig {
    EncoderConfig {
        dim: 16,
        hash_buckets: 1 << 10,
        seed,
        ..Default::default()
    }
}

pub fn linker(c: &SynthCorpus, model: DualEncoder, cfg: RetrieverConfig) -> Linker {
    let retriever = Retriever::build(&c.kb, &c.aliases, &cfg).unwrap();
    let store = EntityEmbeddingStore::precompute(&model, &c.kb, Execution::Sequential).unwrap();
    Linker::new(c.kb.clone(), retriever, model, store, cfg).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One mention against eight same-named candidates of different lengths, gold at 3.
pub fn toy_example(cfg: &EncoderConfig) -> Example {
    let m = MentionRecord::locate("d", "去年长江大桥完成了维修工程", "长江大桥", None).unwrap();
    let ents: Vec<EntityRecord> = (0..8)
        .map(|i| EntityRecord::new(format!("Q{i}"), format!("长江大桥{i}"), format!("桥梁 条目 编号{i} {}", "工程 ".repeat(i + 1))))
        .collect();
    let seqs: Vec<_> = ents.iter().map(|e| build_entity_sequence(e, cfg).unwrap()).collect();
    Example::new(cfg, &build_mention_sequence(&m, cfg).unwrap(), &seqs, 3)
}

#[derive(Clone, Copy, Debug)]
pub enum Slot {
    Projection(usize),
    Bias(usize),
    Embedding(usize, usize),
}

fn param(model: &mut DualEncoder, side: Side, slot: Slot) -> &mut f64 {
    let p = model.params_mut(side);
    match slot {
        Slot::Projection(i) => &mut p.projection_mut()[i],
        Slot::Bias(i) => &mut p.bias_mut()[i],
        Slot::Embedding(r, c) => &mut p.embedding_row_mut(r)[c],
    }
}

#[derive(Debug)]
pub struct GradCheck {
    pub sampled: usize,
    pub worst: f64,
    pub worst_at: Option<(Side, Slot, f64, f64)>,
    /// Analytic and numeric entity-bias gradients are both zero.
    pub entity_bias_inert: bool,
}

/// Central differences with ε = 1e-4 on `per_side` random parameters of each
/// encoder. Relative error uses a denominator floored at 1e-8.
///
/// The entity bias adds the same amount to every candidate score, so its
/// gradient is identically zero and is checked on its own.
pub fn gradient_check(model: &DualEncoder, ex: &Example, per_side: usize, rng: &mut ChaCha8Rng) -> GradCheck {
    let eps = 1e-4;
    let dim = model.config().dim;
    let (_, g_m, g_e) = model.loss_and_grad(ex);
    let mut out = GradCheck { sampled: 0, worst: 0.0, worst_at: None, entity_bias_inert: true };
    for (side, grad, bags) in [
        (Side::Mention, &g_m, vec![&ex.mention]),
        (Side::Entity, &g_e, ex.candidates.iter().collect()),
    ] {
        let rows: Vec<usize> = bags.iter().flat_map(|b| b.rows.iter().map(|&(row, _)| row)).collect();
        let kinds = if side == Side::Mention { 3 } else { 2 };
        for _ in 0..per_side {
            let slot = match rng.gen_range(0..kinds) {
                0 => Slot::Projection(rng.gen_range(0..dim * dim)),
                1 => Slot::Embedding(rows[rng.gen_range(0..rows.len())], rng.gen_range(0..dim)),
                _ => Slot::Bias(rng.gen_range(0..dim)),
            };
            let analytic = match slot {
                Slot::Projection(i) => grad.projection[i],
                Slot::Bias(i) => grad.bias[i],
                Slot::Embedding(row, c) => grad.embedding_entry(row, c),
            };
            let mut plus = model.clone();
            *param(&mut plus, side, slot) += eps;
            let mut minus = model.clone();
            *param(&mut minus, side, slot) -= eps;
            let numeric = (plus.loss(ex) - minus.loss(ex)) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            out.sampled += 1;
            if rel > out.worst || out.worst_at.is_none() {
                out.worst = rel;
                out.worst_at = Some((side, slot, analytic, numeric));
            }
        }
    }
    for i in 0..dim {
        let mut plus = model.clone();
        plus.params_mut(Side::Entity).bias_mut()[i] += eps;
        if g_e.bias[i].abs() > 1e-12 || (plus.loss(ex) - model.loss(ex)).abs() > 1e-10 {
            out.entity_bias_inert = false;
        }
    }
    out
}
