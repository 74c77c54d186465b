//! Deterministic synthetic corpora in the knowledge-base / alias / mention
//! layout.
//!
//! Each entity gets a name built from tokens no other name group uses, four
//! private "topic" tokens in its description, and optionally an alternate
//! alias. Mention documents carry two of the gold entity's topic tokens, so
//! entities that share a name can be told apart by description overlap.
//! Description padding and document padding come from disjoint character
//! pools, so topic tokens are the only overlap between the two.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{
    write_file, AliasEntry, AliasTable, CorpusError, Dataset, EntityRecord, KnowledgeBase, MentionRecord, Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_entities: usize,
    pub n_aliases: usize,
    pub n_mentions: usize,
    /// Fraction of entities whose name is shared with at least one other entity.
    pub ambiguity_rate: f64,
    /// Fraction of mentions written with an alias that is not any entity's name.
    pub tail_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_entities: 200,
            n_aliases: 300,
            n_mentions: 500,
            ambiguity_rate: 0.3,
            tail_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
struct Profile {
    name: String,
    topics: Vec<String>,
    alternates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub kb: KnowledgeBase,
    pub aliases: AliasTable,
    pub mentions: Dataset,
    profiles: Vec<Profile>,
    filler: Vec<String>,
}

const FILLER_CHARS: usize = 60;
const DESC_FILLER_CHARS: usize = 30;
const SUFFIXES: [&str; 5] = ["公司", "大学", "银行", "山", "市"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Hands out tokens no earlier call returned: CJK ideographs first, then
/// Latin pseudo-words.
struct Fresh {
    cjk: Vec<char>,
    next_word: usize,
}

impl Fresh {
    fn token(&mut self) -> String {
        if let Some(c) = self.cjk.pop() {
            return c.to_string();
        }
        let mut n = self.next_word;
        self.next_word += 1;
        let syll = CONSONANTS.len() * VOWELS.len();
        let mut word = String::from("q");
        for _ in 0..3 {
            let s = n % syll;
            n /= syll;
            word.push(CONSONANTS[s / VOWELS.len()] as char);
            word.push(VOWELS[s % VOWELS.len()] as char);
        }
        if n > 0 {
            word.push_str(&n.to_string());
        }
        word
    }

    /// Joins fresh tokens, spacing Latin words so they stay separate tokens.
    fn phrase(&mut self, len: usize) -> String {
        let parts: Vec<String> = (0..len).map(|_| self.token()).collect();
        join_tokens(&parts)
    }
}

fn join_tokens(parts: &[String]) -> String {
    let mut out = String::new();
    for p in parts {
        let latin = !p.chars().all(crate::tokenizer::is_cjk);
        if latin && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(p);
        if latin {
            out.push(' ');
        }
    }
    out.trim().to_string()
}

fn infeasible(msg: impl Into<String>) -> EvalError {
    EvalError::InfeasibleSpec(msg.into())
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus, EvalError> {
    if spec.n_entities == 0 || spec.n_aliases == 0 || spec.n_mentions == 0 {
        return Err(infeasible("entity, alias and mention counts must be at least 1"));
    }
    for (name, rate) in [("ambiguity_rate", spec.ambiguity_rate), ("tail_rate", spec.tail_rate)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(infeasible(format!("{name} must lie in [0,1]")));
        }
    }
    let n = spec.n_entities;
    let mut ambiguous = (spec.ambiguity_rate * n as f64).round() as usize;
    if ambiguous == 1 {
        if n < 2 {
            return Err(infeasible("a shared name needs at least two entities"));
        }
        ambiguous = 2;
    }
    let n_alternates = spec.n_aliases.saturating_sub(n);
    let n_tail = (spec.tail_rate * spec.n_mentions as f64).round() as usize;
    if n_tail > 0 && n_alternates == 0 {
        return Err(infeasible(
            "tail mentions need alternate aliases: n_aliases must exceed n_entities",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<char> = (0x4E00u32..=0x9FFF).filter_map(char::from_u32).collect();
    let reserved: String = SUFFIXES.concat();
    pool.retain(|c| !reserved.contains(*c));
    pool.shuffle(&mut rng);
    let filler: Vec<String> = pool.drain(..FILLER_CHARS).map(String::from).collect();
    let desc_filler: Vec<String> = pool.drain(..DESC_FILLER_CHARS).map(String::from).collect();
    let mut fresh = Fresh { cjk: pool, next_word: 0 };

    // Name groups: ambiguous entities in groups of 2 (one group of 3 when odd), the rest alone.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut rest = &order[..ambiguous];
    while !rest.is_empty() {
        let take = if rest.len() == 3 { 3 } else { 2 };
        groups.push(rest[..take].to_vec());
        rest = &rest[take..];
    }
    groups.extend(order[ambiguous..].iter().map(|&i| vec![i]));

    let mut names = vec![String::new(); n];
    for g in &groups {
        let mut name = fresh.phrase(rng.gen_range(2..=3));
        if rng.gen_bool(0.25) {
            name.push_str(SUFFIXES[rng.gen_range(0..SUFFIXES.len())]);
        }
        for &i in g {
            names[i] = name.clone();
        }
    }

    let mut profiles: Vec<Profile> = names
        .into_iter()
        .map(|name| Profile {
            name,
            topics: (0..4).map(|_| fresh.token()).collect(),
            alternates: Vec::new(),
        })
        .collect();

    let mut entities = Vec::with_capacity(n);
    for (i, p) in profiles.iter().enumerate() {
        let mut words: Vec<String> = p.topics.clone();
        words.extend((0..8).map(|_| desc_filler[rng.gen_range(0..desc_filler.len())].clone()));
        words.shuffle(&mut rng);
        entities.push(EntityRecord::new(entity_id(i), p.name.clone(), join_tokens(&words)));
    }

    // Alias entries: each entity's own name first, priors normalized per group.
    let mut entries = Vec::with_capacity(spec.n_aliases);
    'groups: for g in &groups {
        let weights: Vec<f64> = g.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let mass = rng.gen_range(0.8..=1.0) / weights.iter().sum::<f64>();
        for (&i, w) in g.iter().zip(&weights) {
            if entries.len() == spec.n_aliases.min(n) {
                break 'groups;
            }
            entries.push(AliasEntry {
                alias: profiles[i].name.clone(),
                entity_id: entity_id(i),
                prior: w * mass,
            });
        }
    }
    let mut owners: Vec<usize> = (0..n).collect();
    owners.shuffle(&mut rng);
    for k in 0..n_alternates {
        let i = owners[k % n];
        let alias = fresh.phrase(2);
        profiles[i].alternates.push(alias.clone());
        entries.push(AliasEntry {
            alias,
            entity_id: entity_id(i),
            prior: rng.gen_range(0.3..=1.0),
        });
    }

    let kb = KnowledgeBase::from_entities(entities).map_err(EvalError::Corpus)?;
    let aliases = AliasTable::from_entries(entries).map_err(EvalError::Corpus)?;
    let mut corpus = SynthCorpus {
        kb,
        aliases,
        mentions: Dataset::new(Split::Test, Vec::new()).map_err(EvalError::Corpus)?,
        profiles,
        filler,
    };
    corpus.mentions = corpus.sample_mentions(spec.n_mentions, n_tail, &mut rng, Split::Test, "m")?;
    Ok(corpus)
}

pub(crate) fn entity_id(i: usize) -> String {
    format!("E{i:05}")
}

impl SynthCorpus {
    /// Draws `n` more mentions over the same entities, `tail_rate` of them
    /// written with alternate aliases.
    pub fn extra_mentions(&self, n: usize, tail_rate: f64, seed: u64, split: Split) -> Result<Dataset, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_tail = (tail_rate.clamp(0.0, 1.0) * n as f64).round() as usize;
        self.sample_mentions(n, n_tail, &mut rng, split, &format!("s{seed}-"))
    }

    fn sample_mentions(
        &self,
        n: usize,
        n_tail: usize,
        rng: &mut ChaCha8Rng,
        split: Split,
        prefix: &str,
    ) -> Result<Dataset, EvalError> {
        let with_alt: Vec<usize> = (0..self.profiles.len())
            .filter(|&i| !self.profiles[i].alternates.is_empty())
            .collect();
        if n_tail > 0 && with_alt.is_empty() {
            return Err(infeasible("no alternate aliases to draw tail mentions from"));
        }
        let mut tail_flags: Vec<bool> = (0..n).map(|i| i < n_tail).collect();
        tail_flags.shuffle(rng);

        let mut records = Vec::with_capacity(n);
        for (j, tail) in tail_flags.into_iter().enumerate() {
            let (gold, surface) = if tail {
                let g = with_alt[rng.gen_range(0..with_alt.len())];
                let alts = &self.profiles[g].alternates;
                (g, alts[rng.gen_range(0..alts.len())].clone())
            } else {
                let g = rng.gen_range(0..self.profiles.len());
                (g, self.profiles[g].name.clone())
            };
            let topics = &self.profiles[gold].topics;
            let picked: Vec<&String> = topics.choose_multiple(rng, 2).collect();
            let mut left: Vec<String> = self.filler_run(rng, 3..=8);
            left.push(picked[0].clone());
            left.extend(self.filler_run(rng, 1..=3));
            let mut right: Vec<String> = self.filler_run(rng, 2..=5);
            right.push(picked[1].clone());
            right.extend(self.filler_run(rng, 1..=4));

            let left = join_tokens(&left);
            let right = join_tokens(&right);
            let text = format!("{left} {surface} {right}。");
            let span_start = left.chars().count() + 1;
            let span_end = span_start + surface.chars().count();
            records.push(MentionRecord {
                doc_id: format!("{prefix}{j:06}"),
                text,
                span_start,
                span_end,
                mention: surface,
                gold_id: Some(entity_id(gold)),
            });
        }
        Dataset::new(split, records).map_err(EvalError::Corpus)
    }

    fn filler_run(&self, rng: &mut ChaCha8Rng, len: std::ops::RangeInclusive<usize>) -> Vec<String> {
        let k = rng.gen_range(len);
        (0..k).map(|_| self.filler[rng.gen_range(0..self.filler.len())].clone()).collect()
    }

    /// Writes `kb.jsonl`, `aliases.jsonl` and `mentions.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        write_file(&dir.join("kb.jsonl"), &self.kb.to_jsonl())?;
        write_file(&dir.join("aliases.jsonl"), &self.aliases.to_jsonl())?;
        write_file(&dir.join("mentions.jsonl"), &self.mentions.to_jsonl())
    }
}
