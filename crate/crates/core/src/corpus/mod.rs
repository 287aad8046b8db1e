//! Report data model, ingestion, segmentation, vocabulary, and the seeded
//! synthetic corpus generator.

mod openi;
mod segment;
mod synthetic;
mod vocab;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

pub use segment::{split_sentences, tokenize, ABBREVIATIONS};
pub use synthetic::{generate_detailed, generate_synthetic, EmittedSentence, SyntheticReport, SyntheticSpec, Template};
pub use vocab::{encode, encode_tokens, EncodedSentence, Vocabulary, OOV, PAD};

/// Default number of token positions per encoded sentence.
pub const DEFAULT_MAX_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyRegion {
    Abdomen,
    Chest,
    Spine,
    UpperExtremity,
    LowerExtremity,
    HeadNeck,
}

impl BodyRegion {
    pub const ALL: [BodyRegion; 6] = [
        BodyRegion::Abdomen,
        BodyRegion::Chest,
        BodyRegion::Spine,
        BodyRegion::UpperExtremity,
        BodyRegion::LowerExtremity,
        BodyRegion::HeadNeck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BodyRegion::Abdomen => "abdomen",
            BodyRegion::Chest => "chest",
            BodyRegion::Spine => "spine",
            BodyRegion::UpperExtremity => "upper_extremity",
            BodyRegion::LowerExtremity => "lower_extremity",
            BodyRegion::HeadNeck => "head_neck",
        }
    }
}

impl fmt::Display for BodyRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_region: Option<BodyRegion>,
    /// 0 = normal, 1 = abnormal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<u8>,
}

impl Report {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Report {
            id: id.into(),
            text: text.into(),
            body_region: None,
            gold_label: None,
        }
    }
}

/// A token with byte offsets into the owning report's text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub report_id: String,
    pub index: usize,
    pub tokens: Vec<Token>,
    pub char_span: (usize, usize),
}

impl Sentence {
    pub fn normalized(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.normalized.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    OpenIXml,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "openi_xml" | "openi" => Ok(CorpusFormat::OpenIXml),
            other => Err(Error::invalid(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Load a corpus. For `OpenIXml`, `path` may be one XML file or a directory
/// of `.xml` files (read in file-name order).
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Report>> {
    let reports = match format {
        CorpusFormat::Jsonl => {
            let text = io::read_to_string(path)?;
            parse_jsonl(path, &text)?
        }
        CorpusFormat::OpenIXml => openi::load(path)?,
    };
    check_unique_ids(&reports)?;
    Ok(reports)
}

/// Parse corpus JSONL. Line numbers in errors are 1-based.
pub fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<Report>> {
    let reports: Vec<Report> = io::from_jsonl(path, text)?;
    // from_jsonl skips blank lines, so recover line numbers for validation errors.
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1);
    for (report, line) in reports.iter().zip(lines) {
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            record: line,
            message: message.to_string(),
        };
        if report.id.is_empty() {
            return Err(bad("empty id"));
        }
        if report.text.trim().is_empty() {
            return Err(bad("empty text"));
        }
        if matches!(report.gold_label, Some(l) if l > 1) {
            return Err(bad("gold_label must be 0 or 1"));
        }
    }
    check_unique_ids(&reports)?;
    Ok(reports)
}

pub fn check_unique_ids(reports: &[Report]) -> Result<()> {
    let mut seen = HashSet::with_capacity(reports.len());
    for r in reports {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

pub fn to_jsonl(reports: &[Report]) -> Result<String> {
    io::to_jsonl(reports)
}
