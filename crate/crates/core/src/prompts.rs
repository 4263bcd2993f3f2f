//! Task prompt templates.
//!
//! Template files hold one section per task, introduced by a `[task:<kind>]`
//! header line. Section bodies are rendered by substituting the `{dialogue}`
//! and `{question}` slots in a single pass, so slot-like text inside the
//! dialogue is never re-expanded.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::TaskKind;

pub const DEFAULT_TEMPLATES: &str = include_str!("../templates/default.txt");

const DIALOGUE_SLOT: &str = "{dialogue}";
const QUESTION_SLOT: &str = "{question}";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unknown task header {header:?}")]
    UnknownHeader { line: usize, header: String },
    #[error("line {line}: text outside of any [task:...] section")]
    Orphan { line: usize },
    #[error("task {0} defined twice")]
    Duplicate(TaskKind),
    #[error("no template for task {0}")]
    Missing(TaskKind),
    #[error("template for {task} lacks the {slot} slot")]
    MissingSlot { task: TaskKind, slot: &'static str },
    #[error("template for {task} must not use the {{question}} slot")]
    QuestionSlotNotAllowed { task: TaskKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("question not allowed for {task} (record {record})")]
    QuestionNotAllowed { task: TaskKind, record: String },
    #[error("question required for {task} (record {record})")]
    QuestionRequired { task: TaskKind, record: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub body: String,
}

impl PromptTemplate {
    fn check(&self) -> Result<(), TemplateError> {
        if !self.body.contains(DIALOGUE_SLOT) {
            return Err(TemplateError::MissingSlot {
                task: self.task,
                slot: DIALOGUE_SLOT,
            });
        }
        let has_question = self.body.contains(QUESTION_SLOT);
        match (self.task, has_question) {
            (TaskKind::Qna, false) => Err(TemplateError::MissingSlot {
                task: self.task,
                slot: QUESTION_SLOT,
            }),
            (TaskKind::SummaryText | TaskKind::SummaryKnv, true) => {
                Err(TemplateError::QuestionSlotNotAllowed { task: self.task })
            }
            _ => Ok(()),
        }
    }

    fn render(&self, dialogue: &str, question: Option<&str>) -> String {
        let mut out = String::with_capacity(self.body.len() + dialogue.len());
        let mut rest = self.body.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if let Some(after) = tail.strip_prefix(DIALOGUE_SLOT) {
                out.push_str(dialogue);
                rest = after;
            } else if let (Some(after), Some(q)) = (tail.strip_prefix(QUESTION_SLOT), question) {
                out.push_str(q);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

/// A validated set with exactly one template per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TaskKind, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl TemplateSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut sections: Vec<(TaskKind, Vec<&str>)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(header) = trimmed.strip_prefix("[task:").and_then(|h| h.strip_suffix(']')) {
                let task: TaskKind = header.parse().map_err(|_| TemplateError::UnknownHeader {
                    line: idx + 1,
                    header: header.to_string(),
                })?;
                if sections.iter().any(|(t, _)| *t == task) {
                    return Err(TemplateError::Duplicate(task));
                }
                sections.push((task, Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Err(TemplateError::Orphan { line: idx + 1 });
            }
        }
        let mut templates = BTreeMap::new();
        for (task, lines) in sections {
            let body = lines.join("\n").trim_matches('\n').trim_end().to_string();
            let template = PromptTemplate { task, body };
            template.check()?;
            templates.insert(task, template);
        }
        for task in TaskKind::ALL {
            if !templates.contains_key(&task) {
                return Err(TemplateError::Missing(task));
            }
        }
        Ok(Self { templates })
    }

    pub fn get(&self, task: TaskKind) -> &PromptTemplate {
        &self.templates[&task]
    }

    /// Renders the prompt for `task`. `record_id` only labels errors.
    pub fn build_prompt(
        &self,
        task: TaskKind,
        english_dialogue: &str,
        question: Option<&str>,
        record_id: &str,
    ) -> Result<String, PromptError> {
        match (task, question) {
            (TaskKind::Qna, None) => Err(PromptError::QuestionRequired {
                task,
                record: record_id.to_string(),
            }),
            (TaskKind::SummaryText | TaskKind::SummaryKnv, Some(_)) => {
                Err(PromptError::QuestionNotAllowed {
                    task,
                    record: record_id.to_string(),
                })
            }
            _ => Ok(self.get(task).render(english_dialogue, question)),
        }
    }
}

/// [`TemplateSet::build_prompt`] over the bundled templates.
pub fn build_prompt(
    task: TaskKind,
    english_dialogue: &str,
    question: Option<&str>,
) -> Result<String, PromptError> {
    TemplateSet::default().build_prompt(task, english_dialogue, question, "-")
}
