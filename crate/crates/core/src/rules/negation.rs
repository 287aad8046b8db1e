//! Trigger/scope negation.
//!
//! A `pre` trigger negates findings that lie entirely within the
//! `max_scope` tokens after it; a `post` trigger negates findings entirely
//! within the `max_scope` tokens before it. A terminator token between the
//! trigger and the finding cuts the scope.

use std::path::Path;

use super::Finding;
use crate::corpus::{tokenize, Sentence};
use crate::{io, Error, Result};

const BUILTIN: &str = include_str!("../../data/negation.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Scope follows the trigger.
    Pre,
    /// Scope precedes the trigger.
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationRule {
    pub trigger: Vec<String>,
    pub direction: Direction,
    pub max_scope: usize,
    pub terminators: Vec<String>,
}

impl NegationRule {
    pub fn new(trigger: &str, direction: Direction, max_scope: usize, terminators: &[&str]) -> Result<Self> {
        let trigger: Vec<String> = tokenize(trigger).into_iter().map(|t| t.normalized).collect();
        if trigger.is_empty() {
            return Err(Error::invalid("negation trigger is empty"));
        }
        if max_scope == 0 {
            return Err(Error::invalid("negation max_scope must be >= 1"));
        }
        Ok(NegationRule {
            trigger,
            direction,
            max_scope,
            terminators: terminators.iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()).collect(),
        })
    }

    fn is_terminator(&self, token: &str) -> bool {
        self.terminators.iter().any(|t| t == token)
    }

    fn trigger_positions<'a>(&'a self, tokens: &'a [&str]) -> impl Iterator<Item = usize> + 'a {
        let n = self.trigger.len();
        (0..tokens.len().saturating_sub(n - 1))
            .filter(move |&i| self.trigger.iter().zip(&tokens[i..i + n]).all(|(a, b)| a == b))
    }

    /// Whether this rule negates the finding spanning `[start, end)`.
    pub fn negates(&self, tokens: &[&str], span: (usize, usize)) -> bool {
        let (start, end) = span;
        let n = self.trigger.len();
        self.trigger_positions(tokens).any(|ts| {
            let te = ts + n;
            match self.direction {
                Direction::Pre => {
                    start >= te
                        && end <= te + self.max_scope
                        && !tokens[te..start].iter().any(|t| self.is_terminator(t))
                }
                Direction::Post => {
                    end <= ts
                        && start + self.max_scope >= ts
                        && !tokens[end..ts].iter().any(|t| self.is_terminator(t))
                }
            }
        })
    }
}

/// Ordered rule list; the first rule that negates a finding decides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationRules(pub Vec<NegationRule>);

impl NegationRules {
    pub fn builtin() -> Self {
        NegationRules::parse_tsv(Path::new("<builtin negation rules>"), BUILTIN).expect("builtin rules parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        NegationRules::parse_tsv(path, &io::read_to_string(path)?)
    }

    /// `trigger<TAB>pre|post<TAB>max_scope<TAB>comma,joined,terminators`.
    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let mut rules = Vec::new();
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
            if !(3..=4).contains(&cols.len()) {
                return Err(bad(format!("expected 4 tab-separated columns, found {}", cols.len())));
            }
            let direction = match cols[1].trim() {
                "pre" => Direction::Pre,
                "post" => Direction::Post,
                other => return Err(bad(format!("unknown direction {other:?}"))),
            };
            let max_scope: usize = cols[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad max_scope {:?}", cols[2])))?;
            let terminators: Vec<&str> = cols.get(3).map(|c| c.split(',').collect()).unwrap_or_default();
            rules.push(NegationRule::new(cols[0], direction, max_scope, &terminators).map_err(|e| bad(e.to_string()))?);
        }
        Ok(NegationRules(rules))
    }

    pub fn iter(&self) -> impl Iterator<Item = &NegationRule> {
        self.0.iter()
    }

    /// Index of the first rule negating `span`, if any.
    pub fn first_negating(&self, tokens: &[&str], span: (usize, usize)) -> Option<usize> {
        self.0.iter().position(|r| r.negates(tokens, span))
    }
}

pub fn detect_negation(sentence: &Sentence, mut findings: Vec<Finding>, rules: &NegationRules) -> Vec<Finding> {
    let tokens: Vec<&str> = sentence.normalized().collect();
    for f in &mut findings {
        f.negated = rules.first_negating(&tokens, f.token_span).is_some();
    }
    findings
}
