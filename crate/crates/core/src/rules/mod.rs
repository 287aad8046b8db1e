//! Rule-based teacher: lexicon extraction, trigger/scope negation, and
//! sentence/report classification.

mod lexicon;
mod negation;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, Report, Sentence};
use crate::{Error, Result};

pub use lexicon::{match_findings, Category, Lexicon, LexiconEntry};
pub use negation::{detect_negation, Direction, NegationRule, NegationRules};

/// A lexicon match inside one sentence. `token_span` is a half-open range of
/// token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub concept_id: String,
    pub category: Category,
    pub sentence_index: usize,
    pub token_span: (usize, usize),
    pub negated: bool,
}

/// 1 iff some finding is a non-negated abnormality.
pub fn classify_sentence(findings: &[Finding]) -> u8 {
    findings
        .iter()
        .any(|f| !f.negated && f.category == Category::Abnormality) as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleLabel {
    pub sentence_labels: Vec<u8>,
    pub report_label: u8,
}

pub fn classify_report(sentence_labels: Vec<u8>) -> Result<RuleLabel> {
    if sentence_labels.is_empty() {
        return Err(Error::invalid("cannot classify a report with no sentences"));
    }
    let report_label = sentence_labels.iter().any(|&l| l == 1) as u8;
    Ok(RuleLabel {
        sentence_labels,
        report_label,
    })
}

/// One line of the rule-label JSONL output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRuleOutput {
    pub id: String,
    pub report_label: u8,
    pub sentence_labels: Vec<u8>,
    pub findings: Vec<FindingRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingRecord {
    pub concept_id: String,
    pub sentence: usize,
    pub span: [usize; 2],
    pub negated: bool,
}

impl From<&Finding> for FindingRecord {
    fn from(f: &Finding) -> Self {
        FindingRecord {
            concept_id: f.concept_id.clone(),
            sentence: f.sentence_index,
            span: [f.token_span.0, f.token_span.1],
            negated: f.negated,
        }
    }
}

/// Immutable lexicon + negation rules; shareable across threads.
#[derive(Debug, Clone)]
pub struct RuleLabeler {
    pub lexicon: Lexicon,
    pub rules: NegationRules,
}

impl RuleLabeler {
    pub fn new(lexicon: Lexicon, rules: NegationRules) -> Self {
        RuleLabeler { lexicon, rules }
    }

    /// The shipped starter lexicon and negation rules.
    pub fn builtin() -> Self {
        RuleLabeler::new(Lexicon::builtin(), NegationRules::builtin())
    }

    /// Findings with negation flags for one sentence.
    pub fn sentence_findings(&self, sentence: &Sentence) -> Vec<Finding> {
        let found = match_findings(sentence, &self.lexicon);
        detect_negation(sentence, found, &self.rules)
    }

    pub fn label_sentence(&self, sentence: &Sentence) -> u8 {
        classify_sentence(&self.sentence_findings(sentence))
    }

    pub fn label_sentences(&self, sentences: &[Sentence]) -> Result<(RuleLabel, Vec<Finding>)> {
        let mut labels = Vec::with_capacity(sentences.len());
        let mut findings = Vec::new();
        for s in sentences {
            let f = self.sentence_findings(s);
            labels.push(classify_sentence(&f));
            findings.extend(f);
        }
        Ok((classify_report(labels)?, findings))
    }

    pub fn label_report(&self, report: &Report) -> Result<ReportRuleOutput> {
        let sentences = split_sentences(report);
        let (label, findings) = self
            .label_sentences(&sentences)
            .map_err(|_| Error::invalid(format!("report {:?} has no sentences", report.id)))?;
        Ok(ReportRuleOutput {
            id: report.id.clone(),
            report_label: label.report_label,
            sentence_labels: label.sentence_labels,
            findings: findings.iter().map(FindingRecord::from).collect(),
        })
    }
}
