//! Dialogue records, pipeline results, and their JSON Lines persistence.
//!
//! Corpus files carry one [`DialogueRecord`] per line. Ingestion is fail-fast:
//! the first invalid line aborts loading with an error naming that line.
//! Result files carry one [`PipelineResult`] per line and are written either
//! whole ([`write_results`]) or incrementally ([`append_result`]) for
//! checkpointing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The nine accepted dialogue languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LanguageCode {
    En,
    Hi,
    Mr,
    Kn,
    Gu,
    Te,
    Ta,
    Bn,
    As,
}

impl LanguageCode {
    pub const ALL: [LanguageCode; 9] = [
        LanguageCode::En,
        LanguageCode::Hi,
        LanguageCode::Mr,
        LanguageCode::Kn,
        LanguageCode::Gu,
        LanguageCode::Te,
        LanguageCode::Ta,
        LanguageCode::Bn,
        LanguageCode::As,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageCode::En => "en",
            LanguageCode::Hi => "hi",
            LanguageCode::Mr => "mr",
            LanguageCode::Kn => "kn",
            LanguageCode::Gu => "gu",
            LanguageCode::Te => "te",
            LanguageCode::Ta => "ta",
            LanguageCode::Bn => "bn",
            LanguageCode::As => "as",
        }
    }

    /// English name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            LanguageCode::En => "English",
            LanguageCode::Hi => "Hindi",
            LanguageCode::Mr => "Marathi",
            LanguageCode::Kn => "Kannada",
            LanguageCode::Gu => "Gujarati",
            LanguageCode::Te => "Telugu",
            LanguageCode::Ta => "Tamil",
            LanguageCode::Bn => "Bangla",
            LanguageCode::As => "Assamese",
        }
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown language code {0:?}")]
pub struct UnknownLanguage(pub String);

impl FromStr for LanguageCode {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageCode::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The three generation tasks. Declaration order is the canonical task order
/// used for output maps, traces and report columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Qna,
    SummaryText,
    SummaryKnv,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Qna, TaskKind::SummaryText, TaskKind::SummaryKnv];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Qna => "qna",
            TaskKind::SummaryText => "summary_text",
            TaskKind::SummaryKnv => "summary_knv",
        }
    }

    pub fn column_title(self) -> &'static str {
        match self {
            TaskKind::Qna => "QnA",
            TaskKind::SummaryText => "Summary (Text)",
            TaskKind::SummaryKnv => "Summary (KnV)",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task kind {0:?}")]
pub struct UnknownTask(pub String);

impl FromStr for TaskKind {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub lang: LanguageCode,
    pub turns: Vec<Turn>,
    pub tasks: Vec<TaskKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub questions: Vec<String>,
}

impl DialogueRecord {
    pub fn wants(&self, task: TaskKind) -> bool {
        self.tasks.contains(&task)
    }

    /// Requested tasks in canonical order.
    pub fn ordered_tasks(&self) -> Vec<TaskKind> {
        TaskKind::ALL.into_iter().filter(|t| self.wants(*t)).collect()
    }

    /// Checks every record-level invariant except id uniqueness.
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyId);
        }
        if self.turns.is_empty() {
            return Err(RecordError::NoTurns);
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.speaker.trim().is_empty() {
                return Err(RecordError::EmptySpeaker { turn: i });
            }
            if turn.speaker.contains(['\n', '\r']) {
                return Err(RecordError::SpeakerNewline { turn: i });
            }
        }
        if self.tasks.is_empty() {
            return Err(RecordError::NoTasks);
        }
        for (i, task) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(task) {
                return Err(RecordError::DuplicateTask(*task));
            }
        }
        match (self.wants(TaskKind::Qna), self.questions.is_empty()) {
            (true, true) => Err(RecordError::MissingQuestions),
            (false, false) => Err(RecordError::UnexpectedQuestions),
            _ => Ok(()),
        }
    }

    /// Recoverable oddities that do not block ingestion.
    pub fn warnings(&self) -> Vec<Diagnostic> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.utterance.trim().is_empty())
            .map(|(i, t)| {
                Diagnostic::new(
                    Stage::Ingest,
                    "empty_utterance",
                    format!("turn {} ({}) has an empty utterance", i + 1, t.speaker),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("id is empty")]
    EmptyId,
    #[error("turns is empty")]
    NoTurns,
    #[error("turn {turn} has an empty speaker label")]
    EmptySpeaker { turn: usize },
    #[error("turn {turn} speaker label contains a newline")]
    SpeakerNewline { turn: usize },
    #[error("tasks is empty")]
    NoTasks,
    #[error("task {0} listed twice")]
    DuplicateTask(TaskKind),
    #[error("qna requested without questions")]
    MissingQuestions,
    #[error("questions given but qna not requested")]
    UnexpectedQuestions,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid JSON at line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("missing field `{field}` at line {line}")]
    MissingField { line: usize, field: &'static str },
    #[error("unknown language code at line {line}: {code:?}")]
    UnknownLanguage { line: usize, code: String },
    #[error("unknown task at line {line}: {task:?}")]
    UnknownTask { line: usize, task: String },
    #[error("duplicate id {id:?} at line {line} (first seen at line {first_line})")]
    DuplicateId {
        line: usize,
        id: String,
        first_line: usize,
    },
    #[error("invalid record at line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: RecordError,
    },
}

impl CorpusError {
    /// 1-based line the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Json { line, .. }
            | CorpusError::MissingField { line, .. }
            | CorpusError::UnknownLanguage { line, .. }
            | CorpusError::UnknownTask { line, .. }
            | CorpusError::DuplicateId { line, .. }
            | CorpusError::Invalid { line, .. } => Some(*line),
        }
    }
}

// Loose mirror of the input schema so that missing fields and bad enum values
// can be reported precisely instead of through serde's generic messages.
#[derive(Deserialize)]
struct RawTurn {
    speaker: Option<String>,
    utterance: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    lang: Option<String>,
    turns: Option<Vec<RawTurn>>,
    tasks: Option<Vec<String>>,
    questions: Option<Vec<String>>,
}

fn parse_record_line(text: &str, line: usize) -> Result<DialogueRecord, CorpusError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| CorpusError::Json {
        line,
        message: e.to_string(),
    })?;
    let missing = |field| CorpusError::MissingField { line, field };
    let id = raw.id.ok_or_else(|| missing("id"))?;
    let code = raw.lang.ok_or_else(|| missing("lang"))?;
    let lang = code
        .parse()
        .map_err(|_| CorpusError::UnknownLanguage { line, code })?;
    let turns = raw
        .turns
        .ok_or_else(|| missing("turns"))?
        .into_iter()
        .map(|t| {
            Ok(Turn {
                speaker: t.speaker.ok_or_else(|| missing("speaker"))?,
                utterance: t.utterance.ok_or_else(|| missing("utterance"))?,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;
    let tasks = raw
        .tasks
        .ok_or_else(|| missing("tasks"))?
        .into_iter()
        .map(|task| {
            task.parse()
                .map_err(|_| CorpusError::UnknownTask { line, task })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let record = DialogueRecord {
        id,
        lang,
        turns,
        tasks,
        questions: raw.questions.unwrap_or_default(),
    };
    record
        .validate()
        .map_err(|source| CorpusError::Invalid { line, source })?;
    Ok(record)
}

/// Parses corpus text. Blank lines are skipped but still counted for line
/// numbers.
pub fn parse_corpus(text: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(line_text, line)?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
                first_line,
            });
        }
        seen.insert(record.id.clone(), line);
        records.push(record);
    }
    Ok(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<DialogueRecord>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text)
}

/// Writes records in corpus format.
pub fn write_corpus(path: impl AsRef<Path>, records: &[DialogueRecord]) -> Result<(), ResultsError> {
    write_jsonl(path.as_ref(), records)
}

/// Pipeline stage a diagnostic or trace refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    ForwardTranslate,
    Generate,
    ReverseTranslate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub stage: Stage,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(stage: Stage, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage,
            code: code.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub english_intermediate: String,
    /// Source-language output; absent when reverse translation failed.
    #[serde(rename = "final", default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Ok,
    Bypass,
    Failed,
    Skipped,
}

/// One executed (or bypassed/skipped) stage of a record run.
///
/// `duration` is wall-clock and therefore not persisted; equality ignores it
/// so persisted results compare equal to in-memory ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    pub status: TraceStatus,
    pub items: usize,
    pub input_chars: usize,
    pub output_chars: usize,
    pub truncated: bool,
    #[serde(skip)]
    pub duration: Duration,
}

impl PartialEq for StageTrace {
    fn eq(&self, other: &Self) -> bool {
        self.stage == other.stage
            && self.task == other.task
            && self.status == other.status
            && self.items == other.items
            && self.input_chars == other.input_chars
            && self.output_chars == other.output_chars
            && self.truncated == other.truncated
    }
}

impl Eq for StageTrace {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub id: String,
    pub lang: LanguageCode,
    pub outputs: BTreeMap<TaskKind, TaskOutput>,
    pub diagnostics: Vec<Diagnostic>,
    pub truncated: bool,
    #[serde(default)]
    pub traces: Vec<StageTrace>,
}

impl PipelineResult {
    /// True when some requested task lacks a final output.
    pub fn is_failed(&self, requested: &[TaskKind]) -> bool {
        requested.iter().any(|t| {
            self.outputs
                .get(t)
                .is_none_or(|o| o.final_text.is_none())
        })
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: invalid result at line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ResultsError> {
    let io_err = |source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Writes `results` one per line, replacing any existing file.
pub fn write_results(path: impl AsRef<Path>, results: &[PipelineResult]) -> Result<(), ResultsError> {
    write_jsonl(path.as_ref(), results)
}

/// Appends a single result line and flushes it.
pub fn append_result(path: impl AsRef<Path>, result: &PipelineResult) -> Result<(), ResultsError> {
    let path = path.as_ref();
    let io_err = |source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut line = serde_json::to_vec(result).map_err(|e| io_err(e.into()))?;
    line.push(b'\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    file.write_all(&line).map_err(io_err)?;
    file.flush().map_err(io_err)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<PipelineResult>, ResultsError> {
    let path = path.as_ref();
    let io_err = |source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut results = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str(&line).map_err(|e| ResultsError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        results.push(result);
    }
    Ok(results)
}
