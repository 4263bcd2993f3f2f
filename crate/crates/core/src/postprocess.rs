//! Structured key-value summaries and cleanup of generated text.
//!
//! [`parse_knv`] never fails: lines that do not fit the `Key: Value` grammar
//! become diagnostics carrying the raw line, and [`KnvDoc::lines`] records
//! what happened to every input line.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageCode;
use crate::sentences::is_abbreviation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnvPair {
    key: String,
    value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnvError {
    #[error("key is empty")]
    EmptyKey,
    #[error("key {0:?} contains ':'")]
    ColonInKey(String),
    #[error("pair contains a line break")]
    LineBreak,
}

impl KnvPair {
    /// Builds a pair from trimmed key and value.
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Result<Self, KnvError> {
        let key = key.into().trim().to_string();
        let value = value.into().trim().to_string();
        if key.is_empty() {
            return Err(KnvError::EmptyKey);
        }
        if key.contains(':') {
            return Err(KnvError::ColonInKey(key));
        }
        if key.contains(['\n', '\r']) || value.contains(['\n', '\r']) {
            return Err(KnvError::LineBreak);
        }
        Ok(Self { key, value })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnvIssue {
    /// Prose before the first pair line.
    Preamble,
    /// Colonless line not attached to a pair.
    OrphanLine,
    /// Key already seen earlier in the document; the pair is kept.
    DupKey,
    /// Colon with nothing before it.
    EmptyKey,
}

impl KnvIssue {
    pub fn as_str(self) -> &'static str {
        match self {
            KnvIssue::Preamble => "preamble",
            KnvIssue::OrphanLine => "orphan_line",
            KnvIssue::DupKey => "dup_key",
            KnvIssue::EmptyKey => "empty_key",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnvDiagnostic {
    /// 1-based input line.
    pub line_no: usize,
    pub code: KnvIssue,
    pub raw_line: String,
}

/// What an input line became.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineRole {
    Pair(usize),
    Continuation(usize),
    Blank,
    Diagnostic(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnvDoc {
    pub pairs: Vec<KnvPair>,
    pub diagnostics: Vec<KnvDiagnostic>,
    /// One entry per input line.
    pub lines: Vec<LineRole>,
}

impl KnvDoc {
    pub fn from_pairs(pairs: Vec<KnvPair>) -> Self {
        let lines = (0..pairs.len()).map(LineRole::Pair).collect();
        Self {
            pairs,
            diagnostics: Vec::new(),
            lines,
        }
    }

    pub fn has_issue(&self, issue: KnvIssue) -> bool {
        self.diagnostics.iter().any(|d| d.code == issue)
    }
}

fn split_pair_line(line: &str) -> Option<(&str, &str)> {
    line.split_once(':').map(|(k, v)| (k.trim(), v.trim()))
}

pub fn parse_knv(text: &str) -> KnvDoc {
    let raw_lines: Vec<&str> = if text.is_empty() { Vec::new() } else { text.split('\n').collect() };
    let is_pair = |line: &str| split_pair_line(line).is_some_and(|(k, _)| !k.is_empty());
    let first_pair = raw_lines.iter().position(|l| is_pair(l));

    let mut doc = KnvDoc::default();
    let mut seen_keys: HashSet<String> = HashSet::new();
    let mut open: Option<usize> = None;
    for (idx, raw) in raw_lines.iter().enumerate() {
        let line = raw.trim();
        let diagnose = |doc: &mut KnvDoc, code| {
            doc.diagnostics.push(KnvDiagnostic {
                line_no: idx + 1,
                code,
                raw_line: raw.trim_end_matches('\r').to_string(),
            });
            LineRole::Diagnostic(doc.diagnostics.len() - 1)
        };
        let role = if line.is_empty() {
            open = None;
            LineRole::Blank
        } else if let Some((key, value)) = split_pair_line(line) {
            if key.is_empty() {
                open = None;
                diagnose(&mut doc, KnvIssue::EmptyKey)
            } else {
                if !seen_keys.insert(key.to_string()) {
                    diagnose(&mut doc, KnvIssue::DupKey);
                }
                doc.pairs.push(KnvPair {
                    key: key.to_string(),
                    value: value.to_string(),
                });
                let index = doc.pairs.len() - 1;
                open = Some(index);
                LineRole::Pair(index)
            }
        } else if let Some(index) = open {
            let value = &mut doc.pairs[index].value;
            if !value.is_empty() {
                value.push(' ');
            }
            value.push_str(line);
            LineRole::Continuation(index)
        } else if first_pair.is_some_and(|first| idx < first) {
            diagnose(&mut doc, KnvIssue::Preamble)
        } else {
            diagnose(&mut doc, KnvIssue::OrphanLine)
        };
        doc.lines.push(role);
    }
    doc
}

fn pair_line(pair: &KnvPair) -> String {
    if pair.value.is_empty() {
        format!("{}:", pair.key)
    } else {
        format!("{}: {}", pair.key, pair.value)
    }
}

/// One `key: value` line per pair, in order.
pub fn serialize_knv(doc: &KnvDoc) -> String {
    doc.pairs.iter().map(pair_line).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactRules {
    /// Leading markers removed case-insensitively from the start of a text.
    pub strip_prefixes: Vec<String>,
    /// Languages whose sentence-final '.' becomes '।'.
    pub danda_languages: Vec<LanguageCode>,
}

impl Default for ArtifactRules {
    fn default() -> Self {
        Self {
            strip_prefixes: [
                "Sure,",
                "Sure!",
                "Certainly,",
                "Here is the summary:",
                "Here is the answer:",
                "Answer:",
            ]
            .map(String::from)
            .to_vec(),
            danda_languages: vec![LanguageCode::Hi, LanguageCode::Mr, LanguageCode::Bn, LanguageCode::As],
        }
    }
}

fn strip_marker<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let mut rest = text.chars();
    for m in marker.chars() {
        let t = rest.next()?;
        if !t.to_lowercase().eq(m.to_lowercase()) {
            return None;
        }
    }
    let remainder = rest.as_str();
    let needs_boundary = marker.chars().last().is_some_and(char::is_alphanumeric);
    if needs_boundary && remainder.chars().next().is_some_and(char::is_alphanumeric) {
        return None;
    }
    Some(remainder)
}

/// Removes configured discourse markers from the start of `text`, repeatedly.
pub fn strip_discourse_markers(text: &str, rules: &ArtifactRules) -> String {
    let mut current = text;
    let mut stripped = false;
    'outer: loop {
        let trimmed = current.trim_start();
        for marker in rules.strip_prefixes.iter().filter(|m| !m.is_empty()) {
            if let Some(rest) = strip_marker(trimmed, marker) {
                current = rest;
                stripped = true;
                continue 'outer;
            }
        }
        // leading whitespace is only dropped when a marker was removed
        return if stripped { trimmed.to_string() } else { text.to_string() };
    }
}

/// Replaces sentence-final '.' with '।', skipping decimals, ellipses and
/// known abbreviations.
pub fn convert_dandas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c != '.' {
            out.push(c);
            continue;
        }
        let prev = i.checked_sub(1).map(|p| chars[p]);
        let next = chars.get(i + 1).copied();
        let terminal = next.is_none_or(char::is_whitespace) && prev.is_some_and(|p| p != '.' && !p.is_whitespace());
        let word_start = chars[..i]
            .iter()
            .rposition(|ch| ch.is_whitespace())
            .map_or(0, |p| p + 1);
        let word: String = chars[word_start..=i].iter().collect();
        if terminal && !is_abbreviation(&word) {
            out.push('।');
        } else {
            out.push('.');
        }
    }
    out
}

/// Cleans a final output for `target`: trims it, strips leading discourse
/// markers and, for danda languages, converts sentence-final periods.
/// Idempotent.
pub fn clean_artifacts(text: &str, target: LanguageCode, rules: &ArtifactRules) -> String {
    let stripped = strip_discourse_markers(text, rules).trim().to_string();
    if rules.danda_languages.contains(&target) {
        convert_dandas(&stripped)
    } else {
        stripped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(doc: &KnvDoc) -> Vec<(&str, &str)> {
        doc.pairs.iter().map(|p| (p.key(), p.value())).collect()
    }

    fn codes(doc: &KnvDoc) -> Vec<&'static str> {
        doc.diagnostics.iter().map(|d| d.code.as_str()).collect()
    }

    #[test]
    fn direct_parse() {
        let doc = parse_knv("Chief Complaint: headache\nDuration: 3 days");
        assert_eq!(pairs(&doc), vec![("Chief Complaint", "headache"), ("Duration", "3 days")]);
        assert!(doc.diagnostics.is_empty());
    }

    #[test]
    fn continuation_appends_with_space() {
        let doc = parse_knv("Medication: ibuprofen 400mg\n  twice daily");
        assert_eq!(pairs(&doc), vec![("Medication", "ibuprofen 400mg twice daily")]);
        assert_eq!(doc.lines, vec![LineRole::Pair(0), LineRole::Continuation(0)]);
    }

    #[test]
    fn prose_alone_is_orphan() {
        let doc = parse_knv("The summary is below.");
        assert!(doc.pairs.is_empty());
        assert_eq!(codes(&doc), vec!["orphan_line"]);
        assert_eq!(doc.diagnostics[0].raw_line, "The summary is below.");
    }

    #[test]
    fn preamble_orphan_and_duplicates() {
        let text = "Sure, here is the summary\n\nSymptom: fever\nSymptom: cough\n\nstray remark\n: lonely value\nFollow-up: 10:30 Monday";
        let doc = parse_knv(text);
        assert_eq!(
            pairs(&doc),
            vec![("Symptom", "fever"), ("Symptom", "cough"), ("Follow-up", "10:30 Monday")]
        );
        assert_eq!(codes(&doc), vec!["preamble", "dup_key", "orphan_line", "empty_key"]);
        assert_eq!(doc.diagnostics[1].line_no, 4);
    }

    #[test]
    fn blank_line_closes_pair() {
        let doc = parse_knv("Plan: rest\n\nmore text");
        assert_eq!(pairs(&doc), vec![("Plan", "rest")]);
        assert_eq!(codes(&doc), vec!["orphan_line"]);
    }

    #[test]
    fn empty_value_then_continuation() {
        let doc = parse_knv("Medications:\nparacetamol");
        assert_eq!(pairs(&doc), vec![("Medications", "paracetamol")]);
    }

    #[test]
    fn serialize_basic() {
        let doc = KnvDoc::from_pairs(vec![KnvPair::new("A", "1").unwrap()]);
        assert_eq!(serialize_knv(&doc), "A: 1");
        assert_eq!(serialize_knv(&KnvDoc::default()), "");
        assert!(matches!(KnvPair::new("a:b", "x"), Err(KnvError::ColonInKey(_))));
        assert!(matches!(KnvPair::new("  ", "x"), Err(KnvError::EmptyKey)));
    }

    #[test]
    fn lossless_accounting() {
        let text = "intro\nK1: v1\ncont\n\norphan\nK1: again\n:x\n";
        let doc = parse_knv(text);
        let input: Vec<&str> = text.split('\n').collect();
        assert_eq!(doc.lines.len(), input.len());
        for (line, role) in input.iter().zip(&doc.lines) {
            let t = line.trim();
            match role {
                LineRole::Blank => assert!(t.is_empty()),
                LineRole::Pair(i) => assert!(t.starts_with(doc.pairs[*i].key())),
                LineRole::Continuation(i) => assert!(doc.pairs[*i].value().contains(t)),
                LineRole::Diagnostic(d) => assert_eq!(doc.diagnostics[*d].raw_line.trim(), t),
            }
        }
    }

    #[test]
    fn strip_markers() {
        let rules = ArtifactRules::default();
        assert_eq!(clean_artifacts("Answer: 3 days", LanguageCode::En, &rules), "3 days");
        assert_eq!(clean_artifacts("sure, Answer: 3 days", LanguageCode::En, &rules), "3 days");
        assert_eq!(clean_artifacts("Here island", LanguageCode::En, &rules), "Here island");
        assert_eq!(clean_artifacts("Plain text", LanguageCode::En, &rules), "Plain text");
        assert_eq!(clean_artifacts("The Answer: 3", LanguageCode::En, &rules), "The Answer: 3");
    }

    #[test]
    fn danda_conversion() {
        let rules = ArtifactRules::default();
        assert_eq!(clean_artifacts("ठीक है.", LanguageCode::Hi, &rules), "ठीक है।");
        assert_eq!(clean_artifacts("Answer: 3 days.", LanguageCode::Hi, &rules), "3 days।");
        assert_eq!(convert_dandas("2.5 mg. Dr. Rao... ok."), "2.5 mg। Dr. Rao... ok।");
        assert_eq!(clean_artifacts("ठीक है.", LanguageCode::Ta, &rules), "ठीक है.");
        let off = ArtifactRules { danda_languages: vec![], ..rules };
        assert_eq!(clean_artifacts("ठीक है.", LanguageCode::Hi, &off), "ठीक है.");
    }

    fn well_formed_doc() -> impl Strategy<Value = KnvDoc> {
        let key = "[A-Za-z][A-Za-z0-9 ()/-]{0,15}[A-Za-z0-9)]";
        let value = prop_oneof![Just(String::new()), "[A-Za-z0-9][A-Za-z0-9 .,:;()/-]{0,30}[A-Za-z0-9.)]"];
        prop::collection::vec((key, value), 0..12).prop_map(|kv| {
            let mut seen = HashSet::new();
            KnvDoc::from_pairs(
                kv.into_iter()
                    .filter(|(k, _)| seen.insert(k.trim().to_string()))
                    .map(|(k, v)| KnvPair::new(k, v).unwrap())
                    .collect(),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn serialize_parse_roundtrip(doc in well_formed_doc()) {
            let parsed = parse_knv(&serialize_knv(&doc));
            prop_assert!(parsed.diagnostics.is_empty());
            prop_assert_eq!(parsed.pairs, doc.pairs);
        }

        #[test]
        fn parse_is_total_and_accounts_for_lines(text in "[a-z:\n ]{0,80}") {
            let doc = parse_knv(&text);
            let n = if text.is_empty() { 0 } else { text.split('\n').count() };
            prop_assert_eq!(doc.lines.len(), n);
        }

        #[test]
        fn clean_is_idempotent(text in "(Sure, |Answer: |here is |)[a-zA-Zअ-ह .:\n]{0,40}", danda in any::<bool>()) {
            let lang = if danda { LanguageCode::Hi } else { LanguageCode::En };
            let rules = ArtifactRules::default();
            let once = clean_artifacts(&text, lang, &rules);
            prop_assert_eq!(clean_artifacts(&once, lang, &rules), once);
        }

        #[test]
        fn clean_leaves_unmatched_text(text in "[b-z][a-z ]{0,30}") {
            prop_assert_eq!(clean_artifacts(&text, LanguageCode::Hi, &ArtifactRules::default()), text.trim());
        }
    }
}
