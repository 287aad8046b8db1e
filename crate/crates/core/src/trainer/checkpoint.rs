//! `.rlck` checkpoint files.
//!
//! Layout: `RLCK` magic, u32 LE format version, u64 LE header length, the
//! UTF-8 JSON header, then each parameter block as little-endian f32 in the
//! order listed in the header's `arrays` manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainHistory};
use crate::corpus::Vocabulary;
use crate::net::{ModelDims, ModelParams, BLOCK_NAMES};
use crate::{io, Error, Result};

pub const MAGIC: &[u8; 4] = b"RLCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: ModelDims,
    pub vocabulary: Vocabulary,
    pub params: ModelParams<f32>,
    pub config: TrainConfig,
    /// Wall-clock times are zeroed so identical runs give identical bytes;
    /// the history CSV keeps them.
    pub history: TrainHistory,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dims: ModelDims,
    vocabulary: Vocabulary,
    config: TrainConfig,
    history: TrainHistory,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    len: usize,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, vocabulary: Vocabulary, config: TrainConfig, mut history: TrainHistory) -> Result<Self> {
        if params.dims.vocab_size != vocabulary.len() {
            return Err(Error::Checkpoint(format!(
                "embedding has {} rows but vocabulary has {} tokens",
                params.dims.vocab_size,
                vocabulary.len()
            )));
        }
        for r in &mut history.rows {
            r.wall_seconds = 0.0;
        }
        Ok(Checkpoint {
            format_version: FORMAT_VERSION,
            dims: params.dims,
            vocabulary,
            params,
            config,
            history,
        })
    }

    pub fn max_len(&self) -> usize {
        self.dims.max_len
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks = self.params.blocks();
        let header = Header {
            format_version: self.format_version,
            dims: self.dims,
            vocabulary: self.vocabulary.clone(),
            config: self.config.clone(),
            history: self.history.clone(),
            arrays: BLOCK_NAMES
                .iter()
                .zip(&blocks)
                .map(|(n, b)| ArrayEntry {
                    name: n.to_string(),
                    len: b.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 4 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for b in blocks {
            for x in b {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut data = &body[hlen..];
        let mut blocks = Vec::with_capacity(header.arrays.len());
        for (entry, expected) in header.arrays.iter().zip(BLOCK_NAMES) {
            if entry.name != expected {
                return Err(Error::Checkpoint(format!("array {:?} where {expected:?} was expected", entry.name)));
            }
            let nbytes = entry.len * 4;
            if data.len() < nbytes {
                return Err(Error::Checkpoint(format!("array {expected}: truncated")));
            }
            let (head, rest) = data.split_at(nbytes);
            blocks.push(head.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect());
            data = rest;
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after the last array"));
        }
        let params = ModelParams::from_blocks(header.dims, blocks).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ck = Checkpoint {
            format_version: header.format_version,
            dims: header.dims,
            vocabulary: header.vocabulary,
            params,
            config: header.config,
            history: header.history,
        };
        if ck.dims.vocab_size != ck.vocabulary.len() {
            return Err(bad("dims.vocab_size does not match the vocabulary"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
