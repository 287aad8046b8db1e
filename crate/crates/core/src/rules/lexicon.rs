use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Finding;
use crate::corpus::{tokenize, Sentence};
use crate::{io, Error, Result};

const BUILTIN: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Abnormality,
    NormalMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub concept_id: String,
    /// Normalized tokens.
    pub term: Vec<String>,
    pub category: Category,
}

/// Flat term inventory. Terms are indexed by their first token, longest
/// first, file order among equal lengths.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_first: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.term.is_empty() {
                return Err(Error::invalid(format!("lexicon entry {:?} has an empty term", e.concept_id)));
            }
            if !seen.insert((e.concept_id.as_str(), e.term.as_slice())) {
                return Err(Error::invalid(format!(
                    "duplicate lexicon entry {:?} {:?}",
                    e.concept_id,
                    e.term.join(" ")
                )));
            }
        }
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_first.entry(e.term[0].clone()).or_default().push(i);
        }
        for list in by_first.values_mut() {
            // Stable sort keeps file order within a length.
            list.sort_by_key(|&i| std::cmp::Reverse(entries[i].term.len()));
        }
        Ok(Lexicon { entries, by_first })
    }

    pub fn builtin() -> Self {
        Lexicon::parse_tsv(Path::new("<builtin lexicon>"), BUILTIN).expect("builtin lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Lexicon::parse_tsv(path, &io::read_to_string(path)?)
    }

    /// `concept_id<TAB>term<TAB>category`, `#` comments, blank lines ignored.
    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                record: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated columns, found {}", cols.len())));
            }
            let category = match cols[2].trim() {
                "abnormality" => Category::Abnormality,
                "normal_marker" => Category::NormalMarker,
                other => return Err(bad(format!("unknown category {other:?}"))),
            };
            let term: Vec<String> = tokenize(cols[1]).into_iter().map(|t| t.normalized).collect();
            if cols[0].trim().is_empty() || term.is_empty() {
                return Err(bad("empty concept id or term".into()));
            }
            entries.push(LexiconEntry {
                concept_id: cols[0].trim().to_string(),
                term,
                category,
            });
        }
        if entries.is_empty() {
            return Err(Error::invalid(format!("{}: lexicon is empty", path.display())));
        }
        Lexicon::new(entries).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            record: 0,
            message: e.to_string(),
        })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest entry matching at `pos`.
    fn longest_at(&self, tokens: &[&str], pos: usize) -> Option<&LexiconEntry> {
        let candidates = self.by_first.get(tokens[pos])?;
        candidates.iter().map(|&i| &self.entries[i]).find(|e| {
            let end = pos + e.term.len();
            end <= tokens.len() && e.term.iter().zip(&tokens[pos..end]).all(|(a, b)| a == b)
        })
    }
}

/// Left-to-right longest match over normalized tokens; matched spans are
/// consumed, so findings never overlap.
pub fn match_findings(sentence: &Sentence, lexicon: &Lexicon) -> Vec<Finding> {
    let tokens: Vec<&str> = sentence.normalized().collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        match lexicon.longest_at(&tokens, pos) {
            Some(e) => {
                let end = pos + e.term.len();
                out.push(Finding {
                    concept_id: e.concept_id.clone(),
                    category: e.category,
                    sentence_index: sentence.index,
                    token_span: (pos, end),
                    negated: false,
                });
                pos = end;
            }
            None => pos += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_sentences, Report};

    fn sent(text: &str) -> Sentence {
        split_sentences(&Report::new("r", text)).remove(0)
    }

    fn lex(tsv: &str) -> Lexicon {
        Lexicon::parse_tsv(Path::new("t.tsv"), tsv).unwrap()
    }

    #[test]
    fn longest_match_wins() {
        let l = lex("effusion\teffusion\tabnormality\npleural_effusion\tpleural effusion\tabnormality\n");
        let f = match_findings(&sent("mild pleural effusion"), &l);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].concept_id, "pleural_effusion");
        assert_eq!(f[0].token_span, (1, 3));
    }

    #[test]
    fn no_term_no_findings() {
        let l = lex("effusion\teffusion\tabnormality\n");
        assert!(match_findings(&sent("the lungs are clear"), &l).is_empty());
    }

    #[test]
    fn comments_and_errors() {
        let l = lex("# header\n\nfracture\tFracture\tabnormality\n");
        assert_eq!(l.entries()[0].term, ["fracture"]);
        assert!(Lexicon::parse_tsv(Path::new("t"), "a\tb\n").is_err());
        assert!(Lexicon::parse_tsv(Path::new("t"), "a\tb\tweird\n").is_err());
        assert!(Lexicon::parse_tsv(Path::new("t"), "a\tb\tabnormality\na\tB\tabnormality\n").is_err());
        assert!(Lexicon::parse_tsv(Path::new("t"), "# nothing\n").is_err());
    }

    #[test]
    fn builtin_has_starter_inventory() {
        let l = Lexicon::builtin();
        assert!(l.len() >= 150, "{} entries", l.len());
    }
}
