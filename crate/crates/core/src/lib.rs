//! Two-stage radiology report labeling.
//!
//! A deterministic rule labeler (lexicon matching, trigger/scope negation,
//! sentence and report classification) produces hard sentence labels. A
//! bidirectional LSTM trained on those labels turns them into calibrated
//! soft scores, max-pooled over sentences into report-level scores.
//!
//! Modules, bottom-up:
//! - [`corpus`]: reports, segmentation, tokenization, vocabulary, synthetic data
//! - [`rules`]: the rule-based teacher
//! - [`net`]: embedding, dropout, BiLSTM, dense head, BCE, BPTT, Adam
//! - [`trainer`]: distillation loop, early stopping, checkpoints, inference
//! - [`metrics`]: confusion counts, ROC/AUC, calibration, throughput

pub mod corpus;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod rules;
pub mod trainer;

pub use error::{Error, Result};
