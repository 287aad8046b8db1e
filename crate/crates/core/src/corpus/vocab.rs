use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Sentence;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;

const PAD_TOKEN: &str = "<pad>";
const OOV_TOKEN: &str = "<oov>";

/// Token to index map with `PAD = 0` and `OOV = 1` reserved.
///
/// Serialized as the ordered token list; the index map is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    max_size: usize,
    tokens: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        if r.tokens.len() < 2 || r.tokens[0] != PAD_TOKEN || r.tokens[1] != OOV_TOKEN {
            return Err(Error::invalid("vocabulary must start with <pad>, <oov>"));
        }
        if r.tokens.len() > r.max_size {
            return Err(Error::invalid("vocabulary larger than its max_size"));
        }
        let index: HashMap<String, u32> = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != r.tokens.len() {
            return Err(Error::invalid("vocabulary has duplicate tokens"));
        }
        Ok(Vocabulary {
            tokens: r.tokens,
            index,
            max_size: r.max_size,
        })
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            max_size: v.max_size,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Keep the `max_size - 2` most frequent normalized tokens; ties go to the
    /// lexicographically smaller token.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, max_size: usize) -> Result<Self> {
        Self::from_tokens(
            sentences.into_iter().flat_map(|s| s.normalized()),
            max_size,
        )
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self> {
        if max_size < 3 {
            return Err(Error::invalid(format!("vocabulary max_size must be >= 3, got {max_size}")));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);

        let mut list = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        list.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Vocabulary::try_from(VocabularyRepr { max_size, tokens: list })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn is_full(&self) -> bool {
        self.tokens.len() == self.max_size
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(OOV)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn decode(&self, indices: &[u32]) -> Vec<&str> {
        indices
            .iter()
            .map(|&i| self.token(i).unwrap_or(OOV_TOKEN))
            .collect()
    }
}

/// A sentence as fixed-length vocabulary indices, right-padded with `PAD`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub indices: Vec<u32>,
    pub true_length: usize,
    pub label: u8,
}

impl EncodedSentence {
    pub fn with_label(mut self, label: u8) -> Self {
        self.label = label;
        self
    }

    /// The non-padding prefix.
    pub fn content(&self) -> &[u32] {
        &self.indices[..self.true_length]
    }
}

/// Encode with truncation to the first `max_len` tokens. The label is 0
/// until set with [`EncodedSentence::with_label`].
pub fn encode(sentence: &Sentence, vocab: &Vocabulary, max_len: usize) -> EncodedSentence {
    encode_tokens(sentence.normalized(), vocab, max_len)
}

pub fn encode_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, vocab: &Vocabulary, max_len: usize) -> EncodedSentence {
    let mut indices: Vec<u32> = tokens
        .into_iter()
        .take(max_len)
        .map(|t| vocab.lookup(t))
        .collect();
    let true_length = indices.len();
    indices.resize(max_len, PAD);
    EncodedSentence {
        indices,
        true_length,
        label: 0,
    }
}
