use std::path::Path;

use lexlink::bm25::Bm25Index;
use lexlink::corpus::{load_alias_table, load_knowledge_base, load_mentions, validate, write_file, MissKind};
use lexlink::eval::{
    accuracy_table, gold_ids, generate_synthetic, run_ablation, AccuracyReport, RecallReport, SynthSpec,
};
use lexlink::pipeline::predictions_jsonl;
use lexlink::reranker::{train as train_encoder, DualEncoder, EntityEmbeddingStore};
use lexlink::{derive_seed, AliasTable, Dataset, KnowledgeBase, Linker, Retriever, Split};
use log::{info, warn};
use serde_json::Value;

use crate::config::ConfigFile;
use crate::settings::{required, Settings};
use crate::{CliError, SynthArgs};

const AT_INDEX: &str = "at_index.json";
const KB_INDEX: &str = "kb_index.json";

fn load_kb_and_aliases(s: &Settings) -> Result<(KnowledgeBase, AliasTable), CliError> {
    let kb = load_knowledge_base(required(&s.kb, "kb")?)?;
    let at = load_alias_table(required(&s.aliases, "aliases")?)?;
    let empty = Dataset::new(Split::Test, Vec::new())?;
    let report = validate(&kb, &at, &empty);
    if report.count(MissKind::Alias) == 0 {
        return Ok((kb, at));
    }
    warn!("dropping alias entries that point outside the knowledge base: {report}");
    let kept = at.entries().iter().filter(|e| kb.contains(&e.entity_id)).cloned().collect();
    Ok((kb, AliasTable::from_entries(kept)?))
}

/// Indexes from `index_dir` when set, otherwise built in memory.
fn load_retriever(s: &Settings, kb: &KnowledgeBase, at: &AliasTable) -> Result<Retriever, CliError> {
    match &s.index_dir {
        Some(dir) => {
            let at_index = Bm25Index::load(&dir.join(AT_INDEX))?;
            let kb_index = Bm25Index::load(&dir.join(KB_INDEX))?;
            Ok(Retriever::from_parts(kb, at, at_index, kb_index)?)
        }
        None => Ok(Retriever::build(kb, at, &s.retriever)?),
    }
}

/// Linker over a saved model, with the saved store when one is configured.
fn load_linker(s: &Settings) -> Result<Linker, CliError> {
    let (kb, at) = load_kb_and_aliases(s)?;
    let retriever = load_retriever(s, &kb, &at)?;
    let model = DualEncoder::load(required(&s.model, "model")?)?;
    let store = match &s.store {
        Some(p) => EntityEmbeddingStore::load(p)?,
        None => EntityEmbeddingStore::precompute(&model, &kb, s.exec)?,
    };
    Ok(Linker::new(kb, retriever, model, store, s.retriever)?)
}

fn labelled(path: &Path, kb: &KnowledgeBase) -> Result<Dataset, CliError> {
    let ds = load_mentions(path, Split::Test)?;
    gold_ids(&ds.records)?;
    let report = validate(kb, &AliasTable::from_entries(Vec::new())?, &ds);
    if !report.is_empty() {
        return Err(CliError::Data(format!("{}: gold ids missing from the knowledge base: {report}", path.display())));
    }
    Ok(ds)
}

fn write_reports(dir: &Path, stem: &str, table: &str, rows: Vec<Value>) -> Result<(), CliError> {
    let json = serde_json::to_vec_pretty(&rows).expect("in-memory serialization");
    write_file(&dir.join(format!("{stem}.txt")), table.as_bytes())?;
    write_file(&dir.join(format!("{stem}.json")), &json)?;
    Ok(())
}

pub fn build_index(s: &Settings) -> Result<(), CliError> {
    let (kb, at) = load_kb_and_aliases(s)?;
    let dir = required(&s.index_dir, "index_dir")?;
    let r = Retriever::build(&kb, &at, &s.retriever)?;
    r.at_index().save(&dir.join(AT_INDEX))?;
    r.kb_index().save(&dir.join(KB_INDEX))?;
    println!("alias index: {} documents", r.at_index().doc_count());
    println!("entity-name index: {} documents", r.kb_index().doc_count());
    Ok(())
}

pub fn train(s: &Settings) -> Result<(), CliError> {
    let (kb, at) = load_kb_and_aliases(s)?;
    let retriever = load_retriever(s, &kb, &at)?;
    let path = required(&s.train, "train")?;
    let ds = load_mentions(path, Split::Train)?;
    let (model, report) = train_encoder(&ds, &kb, &retriever, &s.retriever, &s.training, &s.encoder)?;
    model.save(required(&s.model, "model")?)?;
    println!("examples: {}", report.examples);
    println!("steps: {}", report.steps);
    println!("initial loss: {:.6}", report.initial_loss);
    println!("final loss: {:.6}", report.final_loss);
    if !report.final_loss.is_finite() {
        return Err(CliError::Data("training diverged: final loss is not finite".into()));
    }
    Ok(())
}

pub fn embed_entities(s: &Settings) -> Result<(), CliError> {
    let kb = load_knowledge_base(required(&s.kb, "kb")?)?;
    let model = DualEncoder::load(required(&s.model, "model")?)?;
    let store = EntityEmbeddingStore::precompute(&model, &kb, s.exec)?;
    store.save(required(&s.store, "store")?)?;
    println!("embedded {} entities (dim {})", store.len(), store.dim());
    Ok(())
}

pub fn predict(s: &Settings) -> Result<(), CliError> {
    let linker = load_linker(s)?;
    let ds = load_mentions(required(&s.mentions, "mentions")?, Split::Test)?;
    let outputs = linker.link_all(&ds.records, s.variant, s.exec)?;
    write_file(required(&s.out, "out")?, &predictions_jsonl(&outputs))?;
    info!("linked {} mentions with variant {}", outputs.len(), s.variant.label());
    Ok(())
}

pub fn evaluate(s: &Settings) -> Result<(), CliError> {
    let linker = load_linker(s)?;
    let ds = labelled(required(&s.eval, "eval")?, linker.kb())?;
    let dir = required(&s.report_dir, "report_dir")?;
    let golds = gold_ids(&ds.records)?;
    let outputs = linker.link_all(&ds.records, s.variant, s.exec)?;
    let recall = RecallReport::from_outputs(&outputs, &golds)?;
    let acc = AccuracyReport::from_outputs(s.variant.label(), &outputs, &golds)?;
    let table = format!("{}\n{}", recall.to_table(), accuracy_table(std::slice::from_ref(&acc)));
    let mut rows = recall.to_json_rows();
    rows.push(acc.to_json());
    write_reports(dir, "evaluation", &table, rows)?;
    print!("{table}");
    Ok(())
}

pub fn ablate(s: &Settings) -> Result<(), CliError> {
    let linker = load_linker(s)?;
    let ds = labelled(required(&s.eval, "eval")?, linker.kb())?;
    let dir = required(&s.report_dir, "report_dir")?;
    let rows = run_ablation(&linker, &ds.records, &s.ablations, s.exec)?;
    let table = accuracy_table(&rows);
    write_reports(dir, "ablation", &table, rows.iter().map(AccuracyReport::to_json).collect())?;
    print!("{table}");
    Ok(())
}

pub fn synth(a: &SynthArgs, f: &ConfigFile, seed: Option<u64>) -> Result<(), CliError> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        seed: seed.unwrap_or(d.seed),
        n_entities: f.pick_or(a.entities, "synth.entities", d.n_entities)?,
        n_aliases: f.pick_or(a.aliases, "synth.aliases", d.n_aliases)?,
        n_mentions: f.pick_or(a.mentions, "synth.mentions", d.n_mentions)?,
        ambiguity_rate: f.pick_or(a.ambiguity, "synth.ambiguity", d.ambiguity_rate)?,
        tail_rate: f.pick_or(a.tail, "synth.tail", d.tail_rate)?,
    };
    let dir = f
        .pick(a.out_dir.clone(), "synth.out_dir")?
        .ok_or_else(|| CliError::Data("missing --out-dir (or `synth.out_dir` in the settings file)".into()))?;
    let corpus = generate_synthetic(&spec)?;
    corpus.write(&dir)?;
    if let Some(n) = f.pick(a.heldout, "synth.heldout")? {
        let held = corpus.extra_mentions(n, spec.tail_rate, derive_seed(spec.seed, 5), Split::Test)?;
        write_file(&dir.join("heldout.jsonl"), &held.to_jsonl())?;
    }
    println!(
        "wrote {} entities, {} aliases, {} mentions to {}",
        corpus.kb.len(),
        corpus.aliases.len(),
        corpus.mentions.len(),
        dir.display()
    );
    Ok(())
}

