use std::path::{Path, PathBuf};

use lexlink::bm25::Bm25Params;
use lexlink::reranker::{EncoderConfig, TrainConfig};
use lexlink::retriever::AliasExpansion;
use lexlink::{Execution, RetrieverConfig, Variant};

use crate::config::ConfigFile;
use crate::{CliError, Common};

/// Flags merged over the settings file, with library defaults underneath.
#[derive(Debug, Clone)]
pub struct Settings {
    pub kb: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub retriever: RetrieverConfig,
    pub encoder: EncoderConfig,
    pub training: TrainConfig,
    pub variant: Variant,
    pub ablations: Vec<Variant>,
    pub exec: Execution,
}

impl Settings {
    pub fn resolve(c: &Common, f: &ConfigFile, seed: u64, sequential: bool) -> Result<Self, CliError> {
        let rd = RetrieverConfig::default();
        let k1 = f.pick_or(c.k1, "k1", rd.bm25.k1)?;
        let b = f.pick_or(c.b, "b", rd.bm25.b)?;
        let expansion = match f.pick(c.alias_expansion.clone(), "alias_expansion")?.as_deref() {
            None | Some("all") => AliasExpansion::All,
            Some("top-prior") => AliasExpansion::TopPrior,
            Some(other) => return Err(CliError::Data(format!("alias_expansion must be all or top-prior, got {other:?}"))),
        };
        let retriever = RetrieverConfig {
            k_at: f.pick_or(c.k_at, "k_at", rd.k_at)?,
            k_kb: f.pick_or(c.k_kb, "k_kb", rd.k_kb)?,
            k_desc: f.pick_or(c.k_desc, "k_desc", rd.k_desc)?,
            bm25: Bm25Params::new(k1, b).map_err(|e| CliError::Data(e.to_string()))?,
            alias_expansion: expansion,
            fine_query_tokens: f.pick_or(c.fine_query_tokens, "fine_query_tokens", rd.fine_query_tokens)?,
            stages: rd.stages,
        };
        retriever.check().map_err(|e| CliError::Data(e.to_string()))?;

        let ed = EncoderConfig::default();
        let ngram_orders = match f.pick(c.ngram_orders.clone(), "ngram_orders")? {
            Some(list) => parse_list(&list, "ngram_orders", |s| s.parse::<usize>().ok())?,
            None => ed.ngram_orders,
        };
        let encoder = EncoderConfig {
            dim: f.pick_or(c.dim, "dim", ed.dim)?,
            hash_buckets: f.pick_or(c.hash_buckets, "hash_buckets", ed.hash_buckets)?,
            ngram_orders,
            max_len: f.pick_or(c.max_len, "max_len", ed.max_len)?,
            seed,
        };
        encoder.check()?;

        let td = TrainConfig::default();
        let training = TrainConfig {
            learning_rate: f.pick_or(c.learning_rate, "learning_rate", td.learning_rate)?,
            epochs: f.pick_or(c.epochs, "epochs", td.epochs)?,
            batch_size: f.pick_or(c.batch_size, "batch_size", td.batch_size)?,
            negatives_per_example: f.pick_or(c.negatives, "negatives", td.negatives_per_example)?,
            max_grad_norm: f.pick(c.max_grad_norm, "max_grad_norm")?.or(td.max_grad_norm),
            seed,
        };
        training.check()?;

        let variant = match f.pick(c.variant.clone(), "variant")? {
            Some(v) => parse_variant(&v)?,
            None => Variant::Full,
        };
        let ablations = match f.pick(c.ablations.clone(), "ablations")?.as_deref() {
            None | Some("all") => Variant::ABLATIONS.to_vec(),
            Some(list) => parse_list(list, "ablations", |s| parse_variant(s).ok())?,
        };

        let path = |flag: &Option<PathBuf>, key: &str| f.pick(flag.clone(), key);
        Ok(Settings {
            kb: path(&c.kb, "kb")?,
            aliases: path(&c.aliases, "aliases")?,
            train: path(&c.train, "train")?,
            eval: path(&c.eval, "eval")?,
            mentions: path(&c.mentions, "mentions")?,
            index_dir: path(&c.index_dir, "index_dir")?,
            model: path(&c.model, "model")?,
            store: path(&c.store, "store")?,
            out: path(&c.out, "out")?,
            report_dir: path(&c.report_dir, "report_dir")?,
            retriever,
            encoder,
            training,
            variant,
            ablations,
            exec: if sequential { Execution::Sequential } else { Execution::default() },
        })
    }
}

/// A path setting the current command cannot run without.
pub fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| {
        CliError::Data(format!(
            "missing --{} (or `{key}` in the settings file)",
            key.replace('_', "-")
        ))
    })
}

pub fn parse_variant(s: &str) -> Result<Variant, CliError> {
    match s.trim() {
        "full" => Ok(Variant::Full),
        "no-ensemble" | "ensemble" => Ok(Variant::WithoutEnsemble),
        "no-at" | "at" => Ok(Variant::WithoutAt),
        "no-kb" | "kb" => Ok(Variant::WithoutKb),
        "no-desc" | "desc" => Ok(Variant::WithoutDesc),
        other => Err(CliError::Data(format!(
            "unknown variant {other:?}; expected full, no-ensemble, no-at, no-kb or no-desc"
        ))),
    }
}

fn parse_list<T>(list: &str, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    list.split(',')
        .map(|s| parse(s.trim()).ok_or_else(|| CliError::Data(format!("bad entry {s:?} in {key}"))))
        .collect()
}
