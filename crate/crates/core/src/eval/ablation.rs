use super::metrics::{accuracy, AccuracyReport};
use super::EvalError;
use crate::corpus::MentionRecord;
use crate::exec::Execution;
use crate::pipeline::{Linker, Variant};
use crate::reranker::rerank_on_the_fly;
use crate::retriever::rerank_candidates;

/// The full system followed by one row per requested ablation.
pub fn run_ablation(
    linker: &Linker,
    records: &[MentionRecord],
    ablations: &[Variant],
    exec: Execution,
) -> Result<Vec<AccuracyReport>, EvalError> {
    let golds = golds(records)?;
    let mut variants = vec![Variant::Full];
    variants.extend(ablations.iter().copied().filter(|v| *v != Variant::Full));
    variants
        .into_iter()
        .map(|v| {
            let outputs = linker.link_all(records, v, exec)?;
            AccuracyReport::from_outputs(v.label(), &outputs, &golds)
        })
        .collect()
}

/// Accuracy of the reranker's top-1 over the full candidate union, computed
/// without going through the pipeline's variant handling.
pub fn reranker_accuracy(linker: &Linker, records: &[MentionRecord], exec: Execution) -> Result<AccuracyReport, EvalError> {
    let golds = golds(records)?;
    let tops = exec.try_map(records, |m| {
        let r = linker.retriever().retrieve(linker.kb(), m, linker.config());
        let ranked = rerank_on_the_fly(linker.model(), linker.kb(), m, &rerank_candidates(&r))?;
        Ok::<_, EvalError>(ranked.into_iter().next().map(|(id, _)| id))
    })?;
    let preds: Vec<(Option<String>, &str)> = tops.into_iter().map(|t| (t, "reranker")).collect();
    accuracy("Reranker", &preds, &golds)
}

pub(crate) fn golds(records: &[MentionRecord]) -> Result<Vec<String>, EvalError> {
    records
        .iter()
        .map(|r| r.gold_id.clone().ok_or_else(|| EvalError::MissingGold(r.doc_id.clone())))
        .collect()
}
