//! Text normalization, dialogue rendering, approximate token counting,
//! budget truncation and language tagging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{DialogueRecord, LanguageCode};

/// Invisible characters removed by [`normalize_text`]. ZWJ and ZWNJ are kept:
/// Indic scripts use them to select conjunct forms.
const ZERO_WIDTH: [char; 3] = ['\u{200B}', '\u{2060}', '\u{FEFF}'];

/// Normalizes raw text: NFC composition, LF line endings, collapsed horizontal
/// whitespace, per-line trimming, and removal of control and zero-width
/// characters. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let cleaned: String = unified
        .chars()
        .filter(|&c| !ZERO_WIDTH.contains(&c))
        .filter(|&c| c == '\n' || c == '\t' || !c.is_control())
        .collect();
    let mut out = String::with_capacity(cleaned.len());
    for (i, line) in cleaned.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut first = true;
        for word in line.split(|c: char| c.is_whitespace()).filter(|w| !w.is_empty()) {
            if !first {
                out.push(' ');
            }
            out.push_str(word);
            first = false;
        }
    }
    out.nfc().collect()
}

/// Approximate token count: each maximal non-whitespace run counts as
/// `max(1, ceil(chars / 4))`.
pub fn approx_token_count(text: &str) -> usize {
    text.split_whitespace().map(run_tokens).sum()
}

fn run_tokens(run: &str) -> usize {
    run.chars().count().div_ceil(4).max(1)
}

/// A dialogue rendered as one `Speaker: utterance` line per turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedDialogue {
    pub text: String,
    /// Byte span of each turn. Every span except the last includes its
    /// terminating `\n`, so the spans partition `text`.
    pub turn_offsets: Vec<(usize, usize)>,
    pub approx_tokens: usize,
}

impl RenderedDialogue {
    fn from_lines<S: AsRef<str>>(lines: &[S]) -> Self {
        let mut text = String::new();
        let mut turn_offsets = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let start = text.len();
            text.push_str(line.as_ref());
            if i + 1 < lines.len() {
                text.push('\n');
            }
            turn_offsets.push((start, text.len()));
        }
        let approx_tokens = approx_token_count(&text);
        Self {
            text,
            turn_offsets,
            approx_tokens,
        }
    }

    /// Turn text without the trailing newline.
    pub fn turn(&self, index: usize) -> &str {
        let (start, end) = self.turn_offsets[index];
        self.text[start..end].trim_end_matches('\n')
    }

    pub fn turn_count(&self) -> usize {
        self.turn_offsets.len()
    }

    fn turns(&self) -> Vec<&str> {
        (0..self.turn_count()).map(|i| self.turn(i)).collect()
    }
}

/// Renders a record; utterances are normalized and flattened onto one line,
/// speaker labels are kept verbatim.
pub fn render_dialogue(record: &DialogueRecord) -> RenderedDialogue {
    let lines: Vec<String> = record
        .turns
        .iter()
        .map(|turn| {
            let utterance = normalize_text(&turn.utterance).replace('\n', " ");
            let utterance = utterance.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ");
            if utterance.is_empty() {
                format!("{}:", turn.speaker)
            } else {
                format!("{}: {}", turn.speaker, utterance)
            }
        })
        .collect();
    RenderedDialogue::from_lines(&lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncateKeep {
    /// Keep the first turns, drop later ones.
    #[default]
    Head,
    /// Keep the last turns, drop earlier ones.
    Tail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub rendered: RenderedDialogue,
    pub truncated: bool,
    /// Set when a single turn had to be cut mid-text.
    pub turn_split: bool,
    pub kept_turns: usize,
    pub original_turns: usize,
}

/// Cuts `text` to at most `budget` approximate tokens, preferring the last
/// whitespace boundary. A single run longer than the budget is cut by chars.
pub fn truncate_text(text: &str, budget: usize) -> String {
    let mut used = 0;
    let mut end = 0;
    for (start, run) in word_spans(text) {
        let cost = run_tokens(run);
        if used + cost > budget {
            if used == 0 {
                // first run alone is over budget
                let keep: usize = run
                    .char_indices()
                    .nth(budget * 4)
                    .map_or(run.len(), |(i, _)| i);
                return text[..start + keep].to_string();
            }
            break;
        }
        used += cost;
        end = start + run.len();
    }
    text[..end].to_string()
}

fn word_spans(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace()
        .map(move |w| (w.as_ptr() as usize - text.as_ptr() as usize, w))
}

/// Truncates a rendered dialogue to `budget` approximate tokens at turn
/// boundaries. Returns the input unchanged when it already fits.
pub fn truncate_to_budget(rendered: &RenderedDialogue, budget: usize, keep: TruncateKeep) -> Truncation {
    assert!(budget > 0, "token budget must be positive");
    let original_turns = rendered.turn_count();
    if rendered.approx_tokens <= budget {
        return Truncation {
            rendered: rendered.clone(),
            truncated: false,
            turn_split: false,
            kept_turns: original_turns,
            original_turns,
        };
    }
    let turns = rendered.turns();
    let order: Vec<usize> = match keep {
        TruncateKeep::Head => (0..turns.len()).collect(),
        TruncateKeep::Tail => (0..turns.len()).rev().collect(),
    };
    let mut used = 0;
    let mut kept = 0;
    for &i in &order {
        let cost = approx_token_count(turns[i]);
        if used + cost > budget {
            break;
        }
        used += cost;
        kept += 1;
    }
    let (lines, turn_split): (Vec<String>, bool) = if kept == 0 {
        let only = order[0];
        (vec![truncate_text(turns[only], budget)], true)
    } else {
        let range = match keep {
            TruncateKeep::Head => 0..kept,
            TruncateKeep::Tail => turns.len() - kept..turns.len(),
        };
        (turns[range].iter().map(|s| s.to_string()).collect(), false)
    };
    Truncation {
        rendered: RenderedDialogue::from_lines(&lines),
        truncated: true,
        turn_split,
        kept_turns: lines.len(),
        original_turns,
    }
}

/// Per-stage token limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageBudget {
    pub translation_input_max: usize,
    pub translation_output_max: usize,
    pub generation_output_max: usize,
}

impl Default for StageBudget {
    fn default() -> Self {
        Self {
            translation_input_max: 2048,
            translation_output_max: 2048,
            generation_output_max: 3000,
        }
    }
}

impl StageBudget {
    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("translation_input_max", self.translation_input_max),
            ("translation_output_max", self.translation_output_max),
            ("generation_output_max", self.generation_output_max),
        ] {
            if value == 0 {
                return Err(format!("budgets.{name} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagStyle {
    /// `<2xx> text`
    #[default]
    Angle,
    /// `backend_code text`
    PrefixCode,
}

/// Maps internal language codes to the codes a translation backend expects.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagMap {
    pub style: TagStyle,
    pub codes: BTreeMap<LanguageCode, String>,
}

impl TagMap {
    pub fn code(&self, lang: LanguageCode) -> &str {
        self.codes.get(&lang).map_or(lang.as_str(), String::as_str)
    }

    pub fn tag(&self, tgt: LanguageCode) -> String {
        match self.style {
            TagStyle::Angle => format!("<2{}>", self.code(tgt)),
            TagStyle::PrefixCode => self.code(tgt).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("source and target language are both {0}; translation must be bypassed")]
pub struct SameLanguage(pub LanguageCode);

pub fn apply_language_tag(
    text: &str,
    src: LanguageCode,
    tgt: LanguageCode,
    tags: &TagMap,
) -> Result<String, SameLanguage> {
    if src == tgt {
        return Err(SameLanguage(src));
    }
    Ok(format!("{} {}", tags.tag(tgt), text))
}
