use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Checkpoint;
use crate::corpus::{encode, split_sentences, Report, Sentence};
use crate::net;
use crate::{Error, Result};

/// Report-level soft label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    #[serde(rename = "id")]
    pub report_id: String,
    pub score: f64,
    pub hard_label: u8,
    pub uncertainty: f64,
    pub sentence_scores: Vec<f64>,
}

impl LabeledScore {
    /// Max-pool sentence scores into a report score.
    pub fn from_sentence_scores(report_id: impl Into<String>, sentence_scores: Vec<f64>, threshold: f64) -> Result<Self> {
        let score = sentence_scores
            .iter()
            .copied()
            .reduce(f64::max)
            .ok_or_else(|| Error::invalid("no sentence scores to pool"))?;
        Ok(LabeledScore {
            report_id: report_id.into(),
            score,
            hard_label: u8::from(score >= threshold),
            uncertainty: uncertainty(score),
            sentence_scores,
        })
    }
}

/// `1 - |2s - 1|`: 0 at the extremes, 1 at 0.5.
pub fn uncertainty(score: f64) -> f64 {
    1.0 - (2.0 * score - 1.0).abs()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    #[default]
    None,
    UncertaintyDesc,
    ScoreDesc,
}

impl FromStr for SortOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SortOrder::None),
            "uncertainty" | "uncertainty_desc" => Ok(SortOrder::UncertaintyDesc),
            "score" | "score_desc" => Ok(SortOrder::ScoreDesc),
            _ => Err(Error::invalid(format!("unknown sort order {s:?} (none, uncertainty, score)"))),
        }
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortOrder::None => "none",
            SortOrder::UncertaintyDesc => "uncertainty_desc",
            SortOrder::ScoreDesc => "score_desc",
        })
    }
}

/// Inference-mode score of one sentence.
pub fn predict_sentence(checkpoint: &Checkpoint, sentence: &Sentence) -> Result<f64> {
    let encoded = encode(sentence, &checkpoint.vocabulary, checkpoint.max_len());
    if encoded.true_length == 0 {
        return Err(Error::invalid("sentence is empty after tokenization"));
    }
    Ok(net::predict(&checkpoint.params, encoded.content())? as f64)
}

/// Score every non-empty sentence and max-pool.
pub fn predict_report(checkpoint: &Checkpoint, report: &Report, threshold: f64) -> Result<LabeledScore> {
    let scores = split_sentences(report)
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| predict_sentence(checkpoint, s))
        .collect::<Result<Vec<_>>>()?;
    if scores.is_empty() {
        return Err(Error::invalid(format!("report {:?} has no scoreable sentence", report.id)));
    }
    LabeledScore::from_sentence_scores(report.id.clone(), scores, threshold)
}

/// Score a corpus on the current rayon pool (input order kept), then sort.
pub fn label_corpus(checkpoint: &Checkpoint, corpus: &[Report], threshold: f64, sort: SortOrder) -> Result<Vec<LabeledScore>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut out = corpus
        .par_iter()
        .map(|r| predict_report(checkpoint, r, threshold))
        .collect::<Result<Vec<_>>>()?;
    sort_scores(&mut out, sort);
    Ok(out)
}

/// Stable descending sort on the chosen key, ties by report id.
pub fn sort_scores(scores: &mut [LabeledScore], sort: SortOrder) {
    let key: fn(&LabeledScore) -> f64 = match sort {
        SortOrder::None => return,
        SortOrder::UncertaintyDesc => |s| s.uncertainty,
        SortOrder::ScoreDesc => |s| s.score,
    };
    scores.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.report_id.cmp(&b.report_id))
    });
}
