use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use super::EvalError;
use crate::pipeline::LinkOutput;

/// Cutoffs reported per retrieval stage.
pub const RECALL_CUTOFFS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallAtK {
    pub value: f64,
    pub n: usize,
    /// Set when there were no records; `value` is then 0.
    pub empty_input: bool,
}

/// Fraction of records whose gold id is among the first `k` ranked ids.
pub fn recall_at_k<S: AsRef<str>>(results: &[(Vec<S>, S)], k: usize) -> RecallAtK {
    if results.is_empty() {
        log::warn!("recall@{k} over an empty result set is reported as 0");
        return RecallAtK {
            value: 0.0,
            n: 0,
            empty_input: true,
        };
    }
    let hits = results
        .iter()
        .filter(|(ranked, gold)| ranked.iter().take(k).any(|id| id.as_ref() == gold.as_ref()))
        .count();
    RecallAtK {
        value: hits as f64 / results.len() as f64,
        n: results.len(),
        empty_input: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecall {
    pub stage: String,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub n: usize,
    pub stages: Vec<StageRecall>,
}

impl RecallReport {
    /// Recall of the AT-BM25, KB-BM25 and Description-BM25 rankings.
    pub fn from_outputs(outputs: &[LinkOutput], golds: &[String]) -> Result<Self, EvalError> {
        if outputs.len() != golds.len() {
            return Err(EvalError::LengthMismatch(outputs.len(), golds.len()));
        }
        type Pick = fn(&LinkOutput) -> &[String];
        let stages: [(&str, Pick); 3] = [
            ("AT-BM25", |o| o.retrieval.cand_at.ids()),
            ("KB-BM25", |o| o.retrieval.cand_kb.ids()),
            ("Description-BM25", |o| o.retrieval.cand2.ids()),
        ];
        let stages = stages
            .iter()
            .map(|(name, pick)| {
                let rows: Vec<(Vec<&str>, &str)> = outputs
                    .iter()
                    .zip(golds)
                    .map(|(o, g)| (pick(o).iter().map(String::as_str).collect(), g.as_str()))
                    .collect();
                let [r1, r5, r10] = RECALL_CUTOFFS.map(|k| recall_at_k(&rows, k).value);
                StageRecall {
                    stage: name.to_string(),
                    r1,
                    r5,
                    r10,
                }
            })
            .collect();
        let report = RecallReport {
            n: outputs.len(),
            stages,
        };
        report.check()?;
        Ok(report)
    }

    /// r@1 ≤ r@5 ≤ r@10 on every stage.
    pub fn check(&self) -> Result<(), EvalError> {
        for s in &self.stages {
            if !(s.r1 <= s.r5 && s.r5 <= s.r10) {
                return Err(EvalError::NonMonotoneRecall(s.stage.clone()));
            }
        }
        Ok(())
    }

    pub fn to_json_rows(&self) -> Vec<Value> {
        let mut rows = Vec::new();
        for s in &self.stages {
            for (k, v) in RECALL_CUTOFFS.iter().zip([s.r1, s.r5, s.r10]) {
                rows.push(json!({
                    "system": s.stage,
                    "metric": format!("recall@{k}"),
                    "value": v,
                    "n": self.n,
                    "breakdown": {},
                }));
            }
        }
        rows
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} | {:>6} | {:>6} | {:>6}", "Retriever", "r@1", "r@5", "r@10");
        let _ = writeln!(out, "{}", "-".repeat(47));
        for s in &self.stages {
            let _ = writeln!(out, "{:<20} | {:>6.4} | {:>6.4} | {:>6.4}", s.stage, s.r1, s.r5, s.r10);
        }
        let _ = writeln!(out, "({} mentions)", self.n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub system: String,
    pub accuracy: f64,
    pub correct: usize,
    pub n: usize,
    /// Count of final decisions per rule label.
    pub by_rule: BTreeMap<String, usize>,
}

/// Exact-match accuracy of `preds` (entity id plus rule label) against `golds`.
pub fn accuracy(system: &str, preds: &[(Option<String>, &str)], golds: &[String]) -> Result<AccuracyReport, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch(preds.len(), golds.len()));
    }
    let mut by_rule = BTreeMap::new();
    let mut correct = 0;
    for ((pred, rule), gold) in preds.iter().zip(golds) {
        *by_rule.entry(rule.to_string()).or_insert(0) += 1;
        if pred.as_deref() == Some(gold.as_str()) {
            correct += 1;
        }
    }
    let n = preds.len();
    Ok(AccuracyReport {
        system: system.to_string(),
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        correct,
        n,
        by_rule,
    })
}

impl AccuracyReport {
    pub fn from_outputs(system: &str, outputs: &[LinkOutput], golds: &[String]) -> Result<Self, EvalError> {
        let preds: Vec<(Option<String>, &str)> = outputs
            .iter()
            .map(|o| (o.entity_id.clone(), o.decision.as_str()))
            .collect();
        accuracy(system, &preds, golds)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "system": self.system,
            "metric": "accuracy",
            "value": self.accuracy,
            "n": self.n,
            "breakdown": self.by_rule,
        })
    }
}

/// `System name | Accuracy` rows.
pub fn accuracy_table(rows: &[AccuracyReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} | {:>8}", "System name", "Accuracy");
    let _ = writeln!(out, "{}", "-".repeat(35));
    for r in rows {
        let _ = writeln!(out, "{:<24} | {:>8.4}", r.system, r.accuracy);
    }
    out
}
