//! `key = value` settings files.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are the long flag
//! names with `-` replaced by `_`; synth options live under `synth.`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "kb",
    "aliases",
    "train",
    "eval",
    "mentions",
    "index_dir",
    "model",
    "store",
    "out",
    "report_dir",
    "seed",
    "sequential",
    "k_at",
    "k_kb",
    "k_desc",
    "k1",
    "b",
    "alias_expansion",
    "fine_query_tokens",
    "dim",
    "hash_buckets",
    "max_len",
    "ngram_orders",
    "epochs",
    "learning_rate",
    "batch_size",
    "negatives",
    "max_grad_norm",
    "variant",
    "ablations",
    "synth.out_dir",
    "synth.entities",
    "synth.aliases",
    "synth.mentions",
    "synth.ambiguity",
    "synth.tail",
    "synth.heldout",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    source: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| CliError::Data(format!("{}:{}: {why}", path.display(), i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(bad(&format!("unknown key {key:?}")));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(bad(&format!("key {key:?} given twice")));
            }
        }
        Ok(ConfigFile {
            source: Some(path.to_path_buf()),
            values,
        })
    }

    /// The flag value if given, otherwise the parsed file value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        let Some(raw) = self.values.get(key) else {
            return Ok(None);
        };
        raw.parse().map(Some).map_err(|e| {
            let from = self.source.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            CliError::Data(format!("{from}: bad value {raw:?} for {key}: {e}"))
        })
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}
