//! Scoring pipeline outputs against reference texts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{greedy_embed_f1, metric_tokenize, read_jsonl, token_f1, MetricsFileError, ScoreRow};
use crate::client::{BackendClient, BackendError};
use crate::corpus::{LanguageCode, PipelineResult, TaskKind};

/// One reference text: `{"id", "lang", "task", "reference"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub id: String,
    pub lang: LanguageCode,
    pub task: TaskKind,
    pub reference: String,
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldRecord>, MetricsFileError> {
    read_jsonl(path.as_ref(), |_: &GoldRecord| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub lang: LanguageCode,
    pub task: TaskKind,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bert_f: Option<f64>,
    /// No final output was available for this reference.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<RecordScore>,
    /// Means per language and task.
    pub rows: Vec<ScoreRow>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding backend failed: {0}")]
    Embed(#[from] BackendError),
}

fn embed_score(client: &BackendClient, pred: &[String], gold: &[String]) -> Result<f64, EvalError> {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mut unique: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for t in pred.iter().chain(gold) {
        if !index.contains_key(t.as_str()) {
            index.insert(t, unique.len());
            unique.push(t.clone());
        }
    }
    let vectors = client.embed(&unique)?;
    let lookup = |ts: &[String]| -> Vec<Vec<f64>> { ts.iter().map(|t| vectors[index[t.as_str()]].clone()).collect() };
    let prf = greedy_embed_f1(&lookup(pred), &lookup(gold))
        .map_err(|e| BackendError::Protocol {
            role: client.endpoint().role,
            message: e.to_string(),
        })?;
    Ok(prf.f1)
}

/// Scores every reference against the matching final output. References
/// without a prediction score zero and are flagged as missing.
pub fn evaluate(
    predictions: &[PipelineResult],
    gold: &[GoldRecord],
    embedder: Option<&BackendClient>,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &PipelineResult> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut records = Vec::with_capacity(gold.len());
    for g in gold {
        let english = g.lang == LanguageCode::En;
        let prediction = by_id
            .get(g.id.as_str())
            .and_then(|p| p.outputs.get(&g.task))
            .and_then(|o| o.final_text.as_deref());
        let gold_tokens = metric_tokenize(&g.reference, english);
        let (f1, bert_f, missing) = match prediction {
            Some(text) => {
                let pred_tokens = metric_tokenize(text, english);
                let bert = embedder
                    .map(|client| embed_score(client, &pred_tokens, &gold_tokens))
                    .transpose()?;
                (token_f1(&pred_tokens, &gold_tokens), bert, false)
            }
            None => (0.0, embedder.map(|_| 0.0), true),
        };
        records.push(RecordScore {
            id: g.id.clone(),
            lang: g.lang,
            task: g.task,
            f1,
            bert_f,
            missing,
        });
    }
    let mut groups: BTreeMap<(LanguageCode, TaskKind), Vec<&RecordScore>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.lang, r.task)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((language, task), rs)| {
            let n = rs.len() as f64;
            let f1 = rs.iter().map(|r| r.f1).sum::<f64>() / n;
            let bert_f = rs
                .iter()
                .map(|r| r.bert_f)
                .collect::<Option<Vec<f64>>>()
                .map(|bs| bs.iter().sum::<f64>() / n);
            ScoreRow {
                language,
                task,
                f1,
                bert_f,
            }
        })
        .collect();
    Ok(EvalReport { records, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskOutput;

    fn result(id: &str, task: TaskKind, text: &str) -> PipelineResult {
        PipelineResult {
            id: id.into(),
            lang: LanguageCode::En,
            outputs: [(
                task,
                TaskOutput {
                    english_intermediate: text.into(),
                    final_text: Some(text.into()),
                },
            )]
            .into(),
            diagnostics: vec![],
            truncated: false,
            traces: vec![],
        }
    }

    fn gold(id: &str, task: TaskKind, reference: &str) -> GoldRecord {
        GoldRecord {
            id: id.into(),
            lang: LanguageCode::En,
            task,
            reference: reference.into(),
        }
    }

    #[test]
    fn token_scores_without_embedder() {
        let preds = [result("a", TaskKind::Qna, "The patient has fever.")];
        let golds = [
            gold("a", TaskKind::Qna, "patient has fever rash"),
            gold("b", TaskKind::Qna, "anything"),
        ];
        let report = evaluate(&preds, &golds, None).unwrap();
        assert!((report.records[0].f1 - 6.0 / 7.0).abs() < 1e-12);
        assert!(report.records[1].missing);
        assert_eq!(report.rows.len(), 1);
        assert!((report.rows[0].f1 - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(report.rows[0].bert_f, None);
    }
}
