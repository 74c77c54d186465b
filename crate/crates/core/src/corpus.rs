//! Knowledge base, alias table and mention datasets, loaded from JSON Lines.
//!
//! Span offsets are counted in Unicode codepoints, never bytes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Slack allowed on the per-alias prior mass.
pub const PRIOR_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("duplicate entity id {0:?}")]
    DuplicateId(String),
    #[error("empty entity id or name on line {0}")]
    EmptyField(usize),
    #[error("prior out of range [0,1] on line {0}")]
    PriorOutOfRange(usize),
    #[error("priors for alias {0:?} sum above 1")]
    PriorMassExceeded(String),
    #[error("mention span does not match text in document {0:?}")]
    SpanMismatch(String),
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    #[serde(rename = "desc")]
    pub description: String,
}

impl EntityRecord {
    pub fn new(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        EntityRecord {
            id: id.into(),
            name: name.into(),
            description: description.into(),
        }
    }
}

/// The entity inventory. Entity order is file order.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entities: Vec<EntityRecord>,
    index: HashMap<String, usize>,
    fingerprint: String,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
    }
}

impl KnowledgeBase {
    /// Builds a knowledge base from in-memory records. The fingerprint is the
    /// SHA-256 of the canonical JSON Lines serialization.
    pub fn from_entities(entities: Vec<EntityRecord>) -> Result<Self, CorpusError> {
        let mut kb = Self::index_entities(entities, String::new())?;
        kb.fingerprint = sha256_hex(&kb.to_jsonl());
        Ok(kb)
    }

    fn index_entities(entities: Vec<EntityRecord>, fingerprint: String) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(entities.len());
        for (pos, e) in entities.iter().enumerate() {
            if e.id.is_empty() || e.name.is_empty() {
                return Err(CorpusError::EmptyField(pos + 1));
            }
            if index.insert(e.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(e.id.clone()));
            }
        }
        Ok(KnowledgeBase {
            entities,
            index,
            fingerprint,
        })
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&EntityRecord> {
        self.position(id).map(|p| &self.entities[p])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// SHA-256 (hex) of the bytes this knowledge base was loaded from.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        to_jsonl(&self.entities)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub alias: String,
    pub entity_id: String,
    pub prior: f64,
}

/// Alias entries plus per-alias buckets ordered by descending prior, ties by
/// ascending entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    entries: Vec<AliasEntry>,
    by_alias: HashMap<String, Vec<usize>>,
}

impl AliasTable {
    pub fn from_entries(entries: Vec<AliasEntry>) -> Result<Self, CorpusError> {
        for (i, e) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.prior) {
                return Err(CorpusError::PriorOutOfRange(i + 1));
            }
        }
        let mut by_alias: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_alias.entry(e.alias.clone()).or_default().push(i);
        }
        for (alias, bucket) in by_alias.iter_mut() {
            let mass: f64 = bucket.iter().map(|&i| entries[i].prior).sum();
            if mass > 1.0 + PRIOR_MASS_TOLERANCE {
                return Err(CorpusError::PriorMassExceeded(alias.clone()));
            }
            bucket.sort_by(|&a, &b| {
                let (ea, eb) = (&entries[a], &entries[b]);
                eb.prior
                    .total_cmp(&ea.prior)
                    .then_with(|| ea.entity_id.cmp(&eb.entity_id))
            });
        }
        Ok(AliasTable { entries, by_alias })
    }

    pub fn entries(&self) -> &[AliasEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries for `alias` in bucket order.
    pub fn bucket(&self, alias: &str) -> impl Iterator<Item = &AliasEntry> + '_ {
        self.by_alias
            .get(alias)
            .into_iter()
            .flatten()
            .map(|&i| &self.entries[i])
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        to_jsonl(&self.entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(rename = "start")]
    pub span_start: usize,
    #[serde(rename = "end")]
    pub span_end: usize,
    pub mention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_id: Option<String>,
}

impl MentionRecord {
    /// Builds a record for the first occurrence of `mention` in `text`.
    pub fn locate(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        mention: &str,
        gold_id: Option<String>,
    ) -> Option<Self> {
        let text = text.into();
        let byte = text.find(mention)?;
        let span_start = text[..byte].chars().count();
        let span_end = span_start + mention.chars().count();
        Some(MentionRecord {
            doc_id: doc_id.into(),
            text,
            span_start,
            span_end,
            mention: mention.to_string(),
            gold_id,
        })
    }

    /// Splits the text into (left context, mention, right context) by codepoint
    /// offsets. `None` when the span is out of range.
    pub fn split_context(&self) -> Option<(&str, &str, &str)> {
        if self.span_start >= self.span_end {
            return None;
        }
        let a = char_to_byte(&self.text, self.span_start)?;
        let b = char_to_byte(&self.text, self.span_end)?;
        Some((&self.text[..a], &self.text[a..b], &self.text[b..]))
    }

    pub fn check_span(&self) -> Result<(), CorpusError> {
        match self.split_context() {
            Some((_, m, _)) if m == self.mention => Ok(()),
            _ => Err(CorpusError::SpanMismatch(self.doc_id.clone())),
        }
    }
}

fn char_to_byte(s: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    match s.char_indices().nth(chars) {
        Some((b, _)) => Some(b),
        None if s.chars().count() == chars => Some(s.len()),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub records: Vec<MentionRecord>,
}

impl Dataset {
    pub fn new(split: Split, records: Vec<MentionRecord>) -> Result<Self, CorpusError> {
        for r in &records {
            r.check_span()?;
        }
        Ok(Dataset { split, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        to_jsonl(&self.records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MissKind {
    Alias,
    Gold,
}

/// Ids referenced by the alias table or dataset that the knowledge base lacks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub misses: BTreeSet<(MissKind, String)>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.misses.is_empty()
    }

    pub fn count(&self, kind: MissKind) -> usize {
        self.misses.iter().filter(|(k, _)| *k == kind).count()
    }

    pub fn contains(&self, kind: MissKind, id: &str) -> bool {
        self.misses.contains(&(kind, id.to_string()))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<String> = self
            .misses
            .iter()
            .take(10)
            .map(|(k, id)| format!("{}:{id}", if *k == MissKind::Alias { "alias" } else { "gold" }))
            .collect();
        write!(
            f,
            "{} alias misses, {} gold misses [{}{}]",
            self.count(MissKind::Alias),
            self.count(MissKind::Gold),
            shown.join(", "),
            if self.misses.len() > 10 { ", ..." } else { "" }
        )
    }
}

pub fn validate(kb: &KnowledgeBase, at: &AliasTable, ds: &Dataset) -> ValidationReport {
    let mut misses = BTreeSet::new();
    for e in at.entries() {
        if !kb.contains(&e.entity_id) {
            misses.insert((MissKind::Alias, e.entity_id.clone()));
        }
    }
    for r in &ds.records {
        if let Some(g) = &r.gold_id {
            if !kb.contains(g) {
                misses.insert((MissKind::Gold, g.clone()));
            }
        }
    }
    ValidationReport { misses }
}

#[derive(Deserialize)]
struct RawEntity {
    id: String,
    name: String,
    desc: String,
}

#[derive(Deserialize)]
struct RawAlias {
    alias: String,
    entity_id: String,
    prior: f64,
}

pub fn load_knowledge_base(path: &Path) -> Result<KnowledgeBase, CorpusError> {
    let bytes = read(path)?;
    let raws: Vec<RawEntity> = parse_lines(&bytes)?;
    let entities = raws
        .into_iter()
        .map(|r| EntityRecord::new(r.id, r.name, r.desc))
        .collect();
    KnowledgeBase::index_entities(entities, sha256_hex(&bytes))
}

pub fn load_alias_table(path: &Path) -> Result<AliasTable, CorpusError> {
    let bytes = read(path)?;
    let raws: Vec<RawAlias> = parse_lines(&bytes)?;
    AliasTable::from_entries(
        raws.into_iter()
            .map(|r| AliasEntry {
                alias: r.alias,
                entity_id: r.entity_id,
                prior: r.prior,
            })
            .collect(),
    )
}

pub fn load_mentions(path: &Path, split: Split) -> Result<Dataset, CorpusError> {
    let bytes = read(path)?;
    let records: Vec<MentionRecord> = parse_lines(&bytes)?;
    Dataset::new(split, records)
}

fn read(path: &Path) -> Result<Vec<u8>, CorpusError> {
    fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_lines<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::MalformedLine {
        line_no: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        reason: "invalid UTF-8".into(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
            line_no: i + 1,
            reason: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("in-memory serialization");
        buf.push(b'\n');
    }
    buf
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_kb_in_file_order() {
        let f = write_tmp(
            "{\"id\":\"Q1\",\"name\":\"Apple\",\"desc\":\"fruit\"}\n\
             {\"id\":\"Q2\",\"name\":\"Apple\",\"desc\":\"company\"}\n",
        );
        let kb = load_knowledge_base(f.path()).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.position("Q1"), Some(0));
        assert_eq!(kb.position("Q2"), Some(1));
        assert_eq!(kb.get("Q2").unwrap().description, "company");
    }

    #[test]
    fn empty_kb_file() {
        let f = write_tmp("");
        assert!(load_knowledge_base(f.path()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_rejected() {
        let f = write_tmp(
            "{\"id\":\"Q1\",\"name\":\"A\",\"desc\":\"\"}\n{\"id\":\"Q1\",\"name\":\"B\",\"desc\":\"\"}\n",
        );
        match load_knowledge_base(f.path()) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "Q1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"Q1\",\"name\":\"A\",\"desc\":\"\"}\n{\"id\":\"Q2\",\"name\":\"B\"}\n");
        match load_knowledge_base(f.path()) {
            Err(CorpusError::MalformedLine { line_no, .. }) => assert_eq!(line_no, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_knowledge_base(Path::new("/nonexistent/kb.jsonl")).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/kb.jsonl"));
    }

    #[test]
    fn alias_bucket_sorted_by_prior() {
        let f = write_tmp(
            "{\"alias\":\"BigA\",\"entity_id\":\"Q1\",\"prior\":0.3}\n\
             {\"alias\":\"BigA\",\"entity_id\":\"Q2\",\"prior\":0.7}\n",
        );
        let at = load_alias_table(f.path()).unwrap();
        let ids: Vec<_> = at.bucket("BigA").map(|e| e.entity_id.as_str()).collect();
        assert_eq!(ids, ["Q2", "Q1"]);
    }

    #[test]
    fn alias_ties_broken_by_id() {
        let f = write_tmp(
            "{\"alias\":\"X\",\"entity_id\":\"Q9\",\"prior\":0.5}\n\
             {\"alias\":\"X\",\"entity_id\":\"Q3\",\"prior\":0.5}\n",
        );
        let at = load_alias_table(f.path()).unwrap();
        let ids: Vec<_> = at.bucket("X").map(|e| e.entity_id.as_str()).collect();
        assert_eq!(ids, ["Q3", "Q9"]);
    }

    #[test]
    fn prior_out_of_range() {
        let f = write_tmp("{\"alias\":\"X\",\"entity_id\":\"Q1\",\"prior\":1.5}\n");
        assert!(matches!(
            load_alias_table(f.path()),
            Err(CorpusError::PriorOutOfRange(1))
        ));
    }

    #[test]
    fn prior_mass_capped() {
        let entries = vec![
            AliasEntry { alias: "X".into(), entity_id: "Q1".into(), prior: 0.6 },
            AliasEntry { alias: "X".into(), entity_id: "Q2".into(), prior: 0.6 },
        ];
        assert!(matches!(
            AliasTable::from_entries(entries),
            Err(CorpusError::PriorMassExceeded(_))
        ));
    }

    #[test]
    fn mention_loads() {
        let f = write_tmp(
            "{\"doc_id\":\"d1\",\"text\":\"I ate an Apple.\",\"start\":9,\"end\":14,\"mention\":\"Apple\",\"gold_id\":\"Q1\"}\n",
        );
        let ds = load_mentions(f.path(), Split::Test).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records[0].gold_id.as_deref(), Some("Q1"));
    }

    #[test]
    fn mention_span_mismatch() {
        let f = write_tmp(
            "{\"doc_id\":\"d1\",\"text\":\"I ate an Apple.\",\"start\":9,\"end\":14,\"mention\":\"Appl\"}\n",
        );
        match load_mentions(f.path(), Split::Test) {
            Err(CorpusError::SpanMismatch(d)) => assert_eq!(d, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_span_is_mismatch() {
        let r = MentionRecord {
            doc_id: "d".into(),
            text: "abc".into(),
            span_start: 2,
            span_end: 9,
            mention: "c".into(),
            gold_id: None,
        };
        assert!(r.check_span().is_err());
    }

    #[test]
    fn empty_mentions_file() {
        let f = write_tmp("");
        assert!(load_mentions(f.path(), Split::Train).unwrap().is_empty());
    }

    #[test]
    fn codepoint_offsets_on_cjk() {
        let r = MentionRecord::locate("d", "我在中国银行工作", "中国银行", None).unwrap();
        assert_eq!((r.span_start, r.span_end), (2, 6));
        r.check_span().unwrap();
    }

    #[test]
    fn validation_reports_misses() {
        let kb = KnowledgeBase::from_entities(vec![EntityRecord::new("Q1", "A", "")]).unwrap();
        let at = AliasTable::from_entries(vec![
            AliasEntry { alias: "a".into(), entity_id: "Q1".into(), prior: 0.5 },
            AliasEntry { alias: "b".into(), entity_id: "Q99".into(), prior: 0.5 },
        ])
        .unwrap();
        let ds = Dataset::new(
            Split::Train,
            vec![MentionRecord::locate("d", "x A", "A", Some("Q42".into())).unwrap()],
        )
        .unwrap();
        let report = validate(&kb, &at, &ds);
        assert!(report.contains(MissKind::Alias, "Q99"));
        assert!(report.contains(MissKind::Gold, "Q42"));
        assert_eq!(report.count(MissKind::Gold), 1);

        let clean = validate(&kb, &AliasTable::from_entries(vec![]).unwrap(), &Dataset::new(Split::Train, vec![]).unwrap());
        assert!(clean.is_empty());
    }

    #[test]
    fn fingerprint_tracks_file_bytes() {
        let f = write_tmp("{\"id\":\"Q1\",\"name\":\"A\",\"desc\":\"x\"}\n");
        let a = load_knowledge_base(f.path()).unwrap();
        let g = write_tmp("{\"id\":\"Q1\",\"name\":\"A\",\"desc\":\"y\"}\n");
        let b = load_knowledge_base(g.path()).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), sha256_hex(&a.to_jsonl()));
    }

    fn mixed_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-zA-Z]{1,6}",
                "[\u{4E00}-\u{4E80}]{1,4}",
                Just(" ".to_string()),
                Just("，".to_string()),
            ],
            1..12,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn spans_count_codepoints(text in mixed_text(), a in 0usize..40, len in 1usize..6) {
            let n = text.chars().count();
            prop_assume!(a < n);
            let end = (a + len).min(n);
            let mention: String = text.chars().skip(a).take(end - a).collect();
            let r = MentionRecord {
                doc_id: "d".into(),
                text: text.clone(),
                span_start: a,
                span_end: end,
                mention,
                gold_id: None,
            };
            prop_assert!(r.check_span().is_ok());
            let (l, m, rr) = r.split_context().unwrap();
            prop_assert_eq!(format!("{l}{m}{rr}"), text);
            prop_assert_eq!(l.chars().count(), a);
        }

        #[test]
        fn jsonl_round_trip(names in prop::collection::vec(mixed_text(), 0..8), priors in prop::collection::vec(0.0f64..0.3, 0..8)) {
            let kb = KnowledgeBase::from_entities(
                names.iter().enumerate().map(|(i, n)| EntityRecord::new(format!("Q{i}"), n.clone(), n.repeat(2))).collect(),
            ).unwrap();
            let at = AliasTable::from_entries(
                priors.iter().enumerate().map(|(i, &p)| AliasEntry { alias: format!("a{}", i % 3), entity_id: format!("Q{i}"), prior: p }).collect(),
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let kp = dir.path().join("kb.jsonl");
            let ap = dir.path().join("aliases.jsonl");
            write_file(&kp, &kb.to_jsonl()).unwrap();
            write_file(&ap, &at.to_jsonl()).unwrap();
            prop_assert_eq!(load_knowledge_base(&kp).unwrap(), kb);
            prop_assert_eq!(load_alias_table(&ap).unwrap(), at);

            let recs: Vec<_> = names.iter().filter_map(|n| MentionRecord::locate("d", format!("前{n}后"), n, Some("Q0".into()))).collect();
            let ds = Dataset::new(Split::Validation, recs).unwrap();
            let mp = dir.path().join("m.jsonl");
            write_file(&mp, &ds.to_jsonl()).unwrap();
            prop_assert_eq!(load_mentions(&mp, Split::Validation).unwrap(), ds);
        }
    }
}
