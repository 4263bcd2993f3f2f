//! Evaluation metrics: token-overlap F1, greedy cosine-matching F1 over token
//! embeddings, and win rates from pairwise judgments.

mod eval;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LanguageCode, TaskKind};

pub use eval::{evaluate, load_gold, EvalError, EvalReport, GoldRecord, RecordScore};
pub use report::{render_report, ReportFormat, ReportOptions};

const ENGLISH_ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Punctuation stripped from token edges, beyond ASCII punctuation.
const EXTRA_PUNCTUATION: &[char] = &[
    '।', '॥', '“', '”', '‘', '’', '–', '—', '…', '«', '»', '¿', '¡', '·', '•',
];

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Lowercases, splits on whitespace, strips edge punctuation and drops empty
/// pieces. English articles are dropped only when `english` is set.
pub fn metric_tokenize(text: &str, english: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(is_edge_punctuation).to_lowercase())
        .filter(|t| !t.is_empty())
        .filter(|t| !(english && ENGLISH_ARTICLES.contains(&t.as_str())))
        .collect()
}

/// Precision, recall and F1 of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let sum = precision + recall;
        let f1 = if sum == 0.0 { 0.0 } else { 2.0 * (precision * recall) / sum };
        Self { precision, recall, f1 }
    }
}

/// Bag-of-tokens precision/recall/F1. Both empty scores 1.0, one empty 0.0.
pub fn token_prf<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Prf {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return Prf { precision: 1.0, recall: 1.0, f1: 1.0 },
        (true, false) | (false, true) => return Prf { precision: 0.0, recall: 0.0, f1: 0.0 },
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *gold_counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = gold_counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    Prf::from_pr(precision, recall)
}

pub fn token_f1<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    token_prf(pred, gold).f1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedScoreError {
    #[error("{0} vector list is empty")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Greedy cosine matching between candidate and reference token vectors:
/// precision averages each candidate's best match, recall each reference's.
pub fn greedy_embed_f1(cand: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Prf, EmbedScoreError> {
    if cand.is_empty() {
        return Err(EmbedScoreError::Empty("candidate"));
    }
    if reference.is_empty() {
        return Err(EmbedScoreError::Empty("reference"));
    }
    let dim = cand[0].len();
    if let Some(v) = cand.iter().chain(reference).find(|v| v.len() != dim) {
        return Err(EmbedScoreError::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let sim: Vec<Vec<f64>> = cand
        .iter()
        .map(|c| reference.iter().map(|r| cosine(c, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cand.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let mut prf = Prf::from_pr(precision, recall);
    // the harmonic mean is unbounded when P and R differ in sign
    prf.f1 = prf.f1.clamp(-1.0, 1.0);
    Ok(prf)
}

/// Win percentage stored in tenths, rounded half-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WinRate {
    tenths: u64,
}

impl WinRate {
    pub fn tenths(self) -> u64 {
        self.tenths
    }

    pub fn percent(self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

impl fmt::Display for WinRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tenths / 10, self.tenths % 10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WinRateError {
    #[error("win rate needs at least one judgment")]
    NoJudgments,
    #[error("{wins} wins exceed {total} judgments")]
    TooManyWins { wins: u64, total: u64 },
}

/// `100 * wins / total` rounded half-up to one decimal.
pub fn win_rate(wins: u64, total: u64) -> Result<WinRate, WinRateError> {
    if total == 0 {
        return Err(WinRateError::NoJudgments);
    }
    if wins > total {
        return Err(WinRateError::TooManyWins { wins, total });
    }
    // exact integer rounding of 1000 * wins / total
    let tenths = (2000 * wins + total) / (2 * total);
    Ok(WinRate { tenths })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub record_id: String,
    pub language: LanguageCode,
    pub task: TaskKind,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Ties stay in the denominator as non-wins.
    #[default]
    Loss,
    /// Ties are left out of the denominator.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WinTally {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
}

impl WinTally {
    pub fn rate(&self, ties: TiePolicy) -> Option<WinRate> {
        let total = match ties {
            TiePolicy::Loss => self.wins + self.losses + self.ties,
            TiePolicy::Exclude => self.wins + self.losses,
        };
        win_rate(self.wins, total).ok()
    }
}

pub fn tally(judgments: &[Judgment]) -> BTreeMap<(LanguageCode, TaskKind), WinTally> {
    let mut cells: BTreeMap<(LanguageCode, TaskKind), WinTally> = BTreeMap::new();
    for j in judgments {
        let cell = cells.entry((j.language, j.task)).or_default();
        match j.outcome {
            Outcome::Win => cell.wins += 1,
            Outcome::Loss => cell.losses += 1,
            Outcome::Tie => cell.ties += 1,
        }
    }
    cells
}

/// Aggregate automatic scores for one language/task cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub language: LanguageCode,
    pub task: TaskKind,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bert_f: Option<f64>,
}

impl ScoreRow {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.f1) {
            return Err(format!("f1 {} outside [0, 1]", self.f1));
        }
        if let Some(b) = self.bert_f {
            if !(-1.0..=1.0).contains(&b) {
                return Err(format!("bert_f {b} outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MetricsFileError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Invalid {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
    mut check: impl FnMut(&T) -> Result<(), String>,
) -> Result<Vec<T>, MetricsFileError> {
    let file = std::fs::File::open(path).map_err(|source| MetricsFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| MetricsFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| MetricsFileError::Invalid {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let item: T = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        check(&item).map_err(invalid)?;
        out.push(item);
    }
    Ok(out)
}

/// Loads a judgments file, rejecting repeated (record, language, task) keys.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<Judgment>, MetricsFileError> {
    let mut seen = HashSet::new();
    read_jsonl(path.as_ref(), |j: &Judgment| {
        if seen.insert((j.record_id.clone(), j.language, j.task)) {
            Ok(())
        } else {
            Err(format!(
                "duplicate judgment for ({}, {}, {})",
                j.record_id, j.language, j.task
            ))
        }
    })
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>, MetricsFileError> {
    read_jsonl(path.as_ref(), ScoreRow::validate)
}
