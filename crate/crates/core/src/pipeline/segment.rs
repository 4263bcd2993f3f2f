//! Splits English outputs into translation units and reassembles them.

use crate::postprocess::{parse_knv, LineRole};
use crate::sentences::sentence_split;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Item(usize),
    Key(usize),
    Lit(&'static str),
}

/// Layout of one output: lines of segments referencing a shared item list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(super) struct SegmentPlan {
    lines: Vec<Vec<Segment>>,
}

fn push(items: &mut Vec<String>, text: &str) -> usize {
    items.push(text.to_string());
    items.len() - 1
}

fn sentence_line(line: &str, items: &mut Vec<String>) -> Vec<Segment> {
    let mut segments = Vec::new();
    for sentence in sentence_split(line) {
        let sentence = sentence.trim();
        if sentence.is_empty() {
            continue;
        }
        if !segments.is_empty() {
            segments.push(Segment::Lit(" "));
        }
        segments.push(Segment::Item(push(items, sentence)));
    }
    segments
}

impl SegmentPlan {
    /// One item per sentence; line breaks are kept.
    pub(super) fn for_text(text: &str, items: &mut Vec<String>) -> Self {
        let lines = if text.is_empty() {
            Vec::new()
        } else {
            text.split('\n').map(|line| sentence_line(line, items)).collect()
        };
        Self { lines }
    }

    /// Keys and non-empty values are separate items. Lines that did not
    /// parse as pairs are translated as text in place.
    pub(super) fn for_knv(text: &str, items: &mut Vec<String>) -> Self {
        let doc = parse_knv(text);
        let raw: Vec<&str> = if text.is_empty() { Vec::new() } else { text.split('\n').collect() };
        let mut lines = Vec::new();
        for (role, raw_line) in doc.lines.iter().zip(raw) {
            match role {
                LineRole::Pair(i) => {
                    let pair = &doc.pairs[*i];
                    let mut segs = vec![Segment::Key(push(items, pair.key()))];
                    if pair.value().is_empty() {
                        segs.push(Segment::Lit(":"));
                    } else {
                        segs.push(Segment::Lit(": "));
                        segs.push(Segment::Item(push(items, pair.value())));
                    }
                    lines.push(segs);
                }
                LineRole::Continuation(_) => {}
                LineRole::Blank => lines.push(Vec::new()),
                LineRole::Diagnostic(_) => lines.push(sentence_line(raw_line.trim(), items)),
            }
        }
        Self { lines }
    }

    pub(super) fn render(&self, translated: &[String]) -> String {
        self.lines
            .iter()
            .map(|segs| {
                segs.iter()
                    .map(|s| match s {
                        Segment::Item(i) => translated[*i].clone(),
                        // a colon inside a translated key would change how the line parses
                        Segment::Key(i) => translated[*i].replace(':', " ").trim().to_string(),
                        Segment::Lit(l) => (*l).to_string(),
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
