//! Win-rate and automatic-metric tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{tally, Judgment, ScoreRow, TiePolicy, WinRate};
use crate::corpus::{LanguageCode, TaskKind};

const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Markdown,
    /// Rows as `cell & cell & ...`.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportOptions {
    pub format: ReportFormat,
    pub ties: TiePolicy,
}

struct Table {
    title: &'static str,
    rows: Vec<Vec<String>>,
}

fn header() -> Vec<String> {
    std::iter::once("Language".to_string())
        .chain(TaskKind::ALL.iter().map(|t| t.column_title().to_string()))
        .collect()
}

fn render_table(table: &Table, format: ReportFormat, out: &mut String) {
    out.push_str(&format!("## {}\n\n", table.title));
    let head = header();
    match format {
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", head.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(head.len())));
            for row in &table.rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
        ReportFormat::Plain => {
            out.push_str(&head.join(" & "));
            out.push('\n');
            for row in &table.rows {
                out.push_str(&row.join(" & "));
                out.push('\n');
            }
        }
    }
}

/// Descending by the QnA key (absent last), then by language name.
fn rank<K: PartialOrd>(a: (LanguageCode, Option<K>), b: (LanguageCode, Option<K>)) -> Ordering {
    let by_key = match (&a.1, &b.1) {
        (Some(x), Some(y)) => y.partial_cmp(x).unwrap_or(Ordering::Equal),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_key.then_with(|| a.0.display_name().cmp(b.0.display_name()))
}

fn win_table(judgments: &[Judgment], ties: TiePolicy) -> Table {
    let cells = tally(judgments);
    let rate = |lang, task| -> Option<WinRate> { cells.get(&(lang, task)).and_then(|t| t.rate(ties)) };
    let mut langs: Vec<LanguageCode> = cells.keys().map(|(l, _)| *l).collect();
    langs.dedup();
    langs.sort_by(|a, b| rank((*a, rate(*a, TaskKind::Qna)), (*b, rate(*b, TaskKind::Qna))));
    let rows = langs
        .into_iter()
        .map(|lang| {
            std::iter::once(lang.display_name().to_string())
                .chain(TaskKind::ALL.iter().map(|t| {
                    rate(lang, *t).map_or_else(|| MISSING.to_string(), |r| format!("{r}%"))
                }))
                .collect()
        })
        .collect();
    Table {
        title: "Win rates",
        rows,
    }
}

fn score_table(scores: &[ScoreRow]) -> Table {
    let cells: BTreeMap<(LanguageCode, TaskKind), &ScoreRow> =
        scores.iter().map(|s| ((s.language, s.task), s)).collect();
    let qna_f1 = |lang| cells.get(&(lang, TaskKind::Qna)).map(|s| s.f1);
    let mut langs: Vec<LanguageCode> = cells.keys().map(|(l, _)| *l).collect();
    langs.dedup();
    langs.sort_by(|a, b| rank((*a, qna_f1(*a)), (*b, qna_f1(*b))));
    let rows = langs
        .into_iter()
        .map(|lang| {
            std::iter::once(lang.display_name().to_string())
                .chain(TaskKind::ALL.iter().map(|t| match cells.get(&(lang, *t)) {
                    Some(s) => format!(
                        "{:.3} / {}",
                        s.f1,
                        s.bert_f.map_or_else(|| MISSING.to_string(), |b| format!("{b:.3}"))
                    ),
                    None => MISSING.to_string(),
                }))
                .collect()
        })
        .collect();
    Table {
        title: "Automatic metrics (F1 / BERT)",
        rows,
    }
}

/// Renders the win-rate table followed by the F1/BERT table.
pub fn render_report(judgments: &[Judgment], scores: &[ScoreRow], options: ReportOptions) -> String {
    let mut out = String::new();
    render_table(&win_table(judgments, options.ties), options.format, &mut out);
    out.push('\n');
    render_table(&score_table(scores), options.format, &mut out);
    out
}
