//! Rule-based English sentence splitting.

/// Words ending in '.' that do not end a sentence. Compared case-insensitively.
pub const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "jr.", "st.", "vs.", "e.g.", "i.e.", "approx.",
];

const TERMINALS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '”', '’'];

pub fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Byte offsets just past each sentence end in a single line: after a run of
/// `.`/`!`/`?` (plus closing quotes or brackets) that is followed by
/// whitespace or the end of the line, unless the run is a lone `.` closing a
/// known abbreviation.
pub(crate) fn sentence_ends(line: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut ends = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !TERMINALS.contains(&chars[i].1) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && TERMINALS.contains(&chars[i].1) {
            i += 1;
        }
        let puncts = i - run_start;
        while i < chars.len() && CLOSERS.contains(&chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(line.len(), |(b, _)| *b);
        let at_boundary = chars.get(i).is_none_or(|(_, c)| c.is_whitespace());
        if !at_boundary {
            continue;
        }
        if puncts == 1 && chars[run_start].1 == '.' {
            let word_start = line[..chars[run_start].0]
                .rfind(char::is_whitespace)
                .map_or(0, |p| p + 1);
            if is_abbreviation(&line[word_start..end]) {
                continue;
            }
        }
        ends.push(end);
    }
    ends
}

/// Splits English text into sentences. Newlines always split; sentence
/// punctuation stays with its sentence; empty pieces are dropped.
pub fn sentence_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let mut start = 0;
        for end in sentence_ends(line) {
            push_trimmed(&mut out, &line[start..end]);
            start = end;
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}
