//! Rule-based sentence segmentation and tokenization.
//!
//! Sentences end at `!`, `?`, a blank line, or a `.` followed by whitespace
//! (or end of text) unless the word before it is a known abbreviation. List
//! enumerators (`1.` or `2)` at the start of a segment or right after a
//! colon) also end a segment and are dropped. Segments that hold nothing but
//! a section header such as `IMPRESSION:` are dropped.

use super::{Report, Sentence, Token};

/// Words after which a `.` does not end a sentence (compared lowercased,
/// internal dots kept: `e.g`).
pub const ABBREVIATIONS: &[&str] = &[
    "approx", "dr", "e.g", "eg", "etc", "fig", "i.e", "ie", "mr", "mrs", "ms", "prof", "st", "vs",
];

pub fn split_sentences(report: &Report) -> Vec<Sentence> {
    segment_spans(&report.text)
        .into_iter()
        .enumerate()
        .map(|(index, span)| Sentence {
            report_id: report.id.clone(),
            index,
            tokens: tokenize_at(&report.text[span.0..span.1], span.0),
            char_span: span,
        })
        .collect()
}

/// Tokenize free text. Spans are byte offsets into `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_at(text, 0)
}

fn tokenize_at(text: &str, base: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run: Option<usize> = None;
    let push = |tokens: &mut Vec<Token>, start: usize, end: usize| {
        let surface = &text[start..end];
        tokens.push(Token {
            surface: surface.to_string(),
            normalized: surface.to_lowercase(),
            span: (base + start, base + end),
        });
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            run.get_or_insert(i);
            continue;
        }
        if let Some(start) = run.take() {
            push(&mut tokens, start, i);
        }
        if !c.is_whitespace() {
            push(&mut tokens, i, i + c.len_utf8());
        }
    }
    if let Some(start) = run {
        push(&mut tokens, start, text.len());
    }
    tokens
}

fn segment_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                if let Some(end) = blank_line_end(bytes, i) {
                    push_segment(text, start, i, &mut spans);
                    start = end;
                    i = end;
                    continue;
                }
            }
            b'!' | b'?' => {
                push_segment(text, start, i + 1, &mut spans);
                start = i + 1;
            }
            b'.' | b')' if followed_by_space(bytes, i) => {
                let word_start = word_start(bytes, i);
                let word = &text[word_start..i];
                if is_enumerator(word) && opens_list(&text[start..word_start]) {
                    push_segment(text, start, word_start, &mut spans);
                    start = i + 1;
                } else if b == b'.' && !is_abbreviation(word) {
                    push_segment(text, start, i + 1, &mut spans);
                    start = i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    push_segment(text, start, text.len(), &mut spans);
    spans
}

/// If a blank line starts at `i` (a newline, optional horizontal space,
/// another newline), return the index just past it.
fn blank_line_end(bytes: &[u8], i: usize) -> Option<usize> {
    let mut j = i + 1;
    while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t' || bytes[j] == b'\r') {
        j += 1;
    }
    (j < bytes.len() && bytes[j] == b'\n').then_some(j + 1)
}

fn followed_by_space(bytes: &[u8], i: usize) -> bool {
    bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace())
}

fn word_start(bytes: &[u8], i: usize) -> usize {
    let mut j = i;
    while j > 0 && !bytes[j - 1].is_ascii_whitespace() {
        j -= 1;
    }
    j
}

fn is_enumerator(word: &str) -> bool {
    (1..=2).contains(&word.len()) && word.bytes().all(|b| b.is_ascii_digit())
}

fn opens_list(preceding: &str) -> bool {
    let p = preceding.trim();
    p.is_empty() || p.ends_with(':')
}

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    ABBREVIATIONS.contains(&w.as_str())
}

fn is_header_only(segment: &str) -> bool {
    match segment.strip_suffix(':') {
        Some(head) => {
            !head.is_empty()
                && head
                    .chars()
                    .all(|c| c.is_alphabetic() || c == ' ' || c == '/' || c == '-')
        }
        None => false,
    }
}

fn push_segment(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start().len();
    let trimmed = raw.trim();
    if trimmed.is_empty() || is_header_only(trimmed) {
        return;
    }
    let s = start + lead;
    spans.push((s, s + trimmed.len()));
}
