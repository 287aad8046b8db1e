//! Distillation: fit the BiLSTM to rule-labeler sentence labels, checkpoint
//! it, and turn sentence scores into report-level soft labels.

mod checkpoint;
mod inference;

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{encode, split_sentences, EncodedSentence, Report, Vocabulary};
use crate::net::{self, adam_step, bce_loss, AdamConfig, AdamState, DropoutConfig, ModelDims, ModelParams};
use crate::rules::ReportRuleOutput;
use crate::{Error, Result};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use inference::{label_corpus, predict_report, predict_sentence, sort_scores, uncertainty, LabeledScore, SortOrder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub optimizer: AdamConfig,
    pub dropout: DropoutConfig,
    pub seed: u64,
    pub dims: ModelDims,
    /// Global-norm gradient clipping; off unless set.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            validation_fraction: 0.1,
            optimizer: AdamConfig::default(),
            dropout: DropoutConfig::default(),
            seed: 0,
            dims: ModelDims::default(),
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie strictly between 0 and 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid("grad_clip must be positive"));
            }
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return Err(Error::invalid("optimizer settings out of range"));
        }
        self.dropout.validate()?;
        self.dims.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.rows.len()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.rows.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy,wall_seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.wall_seconds
            ));
        }
        out
    }
}

/// Outcome of feeding one epoch's validation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience counter on validation loss. Only a strict decrease counts as
/// an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        match self.best {
            Some((_, b)) if val_loss >= b => {
                self.wait += 1;
                if self.wait >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.wait = 0;
                Verdict::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Encoded train/validation sentences plus the report ids behind each side.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub train: Vec<EncodedSentence>,
    pub val: Vec<EncodedSentence>,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// Vocabulary over every sentence of the corpus, capped at `max_size`.
pub fn build_vocabulary(corpus: &[Report], max_size: usize) -> Result<Vocabulary> {
    let sentences: Vec<_> = corpus.iter().flat_map(split_sentences).collect();
    Vocabulary::build(&sentences, max_size)
}

/// Report-level split: ids are sorted, shuffled with `seed`, and the first
/// `round(n * fraction)` (at least 1, at most n - 1) go to validation.
pub fn split_ids(ids: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let mut sorted: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if sorted.len() < 2 {
        return Err(Error::invalid("need at least two reports to split"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("validation_fraction must lie strictly between 0 and 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n = sorted.len();
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let train = sorted.split_off(k);
    Ok((train, sorted))
}

/// One example per sentence labelled with the teacher's sentence label.
/// Sentences that encode to nothing are dropped.
pub fn make_training_set(
    corpus: &[Report],
    rule_labels: &[ReportRuleOutput],
    vocab: &Vocabulary,
    max_len: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<TrainingSet> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let labels: HashMap<&str, &ReportRuleOutput> = rule_labels.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut per_report: HashMap<&str, Vec<EncodedSentence>> = HashMap::with_capacity(corpus.len());
    for report in corpus {
        let teacher = labels
            .get(report.id.as_str())
            .ok_or_else(|| Error::invalid(format!("no rule labels for report {:?}", report.id)))?;
        let sentences = split_sentences(report);
        if sentences.len() != teacher.sentence_labels.len() {
            return Err(Error::invalid(format!(
                "report {:?}: {} sentences but {} rule sentence labels",
                report.id,
                sentences.len(),
                teacher.sentence_labels.len()
            )));
        }
        let encoded = sentences
            .iter()
            .zip(&teacher.sentence_labels)
            .map(|(s, &y)| encode(s, vocab, max_len).with_label(y))
            .filter(|e| e.true_length > 0)
            .collect();
        if per_report.insert(report.id.as_str(), encoded).is_some() {
            return Err(Error::DuplicateId(report.id.clone()));
        }
    }
    let ids: Vec<String> = corpus.iter().map(|r| r.id.clone()).collect();
    let (train_ids, val_ids) = split_ids(&ids, validation_fraction, seed)?;
    let gather = |ids: &[String]| -> Vec<EncodedSentence> {
        ids.iter().flat_map(|id| per_report[id.as_str()].iter().cloned()).collect()
    };
    Ok(TrainingSet {
        vocab: vocab.clone(),
        max_len,
        train: gather(&train_ids),
        val: gather(&val_ids),
        train_ids,
        val_ids,
    })
}

/// The pieces of a training run the epoch driver needs.
pub(crate) trait Session {
    type Snapshot;
    /// One pass over the training data; returns the mean training loss.
    fn run_epoch(&mut self, epoch: usize) -> Result<f64>;
    /// (validation loss, validation accuracy) of the current weights.
    fn evaluate(&mut self) -> Result<(f64, f64)>;
    fn snapshot(&self) -> Self::Snapshot;
}

/// Epoch loop with early stopping; returns the snapshot taken at the best
/// epoch.
pub(crate) fn drive<S: Session>(
    session: &mut S,
    max_epochs: usize,
    patience: usize,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(S::Snapshot, TrainHistory)> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = TrainHistory::default();
    let mut best = None;
    for epoch in 1..=max_epochs {
        let start = Instant::now();
        let train_loss = session.run_epoch(epoch)?;
        let (val_loss, val_accuracy) = session.evaluate()?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: non-finite validation loss")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        history.rows.push(record);
        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => {
                best = Some(session.snapshot());
                history.best_epoch = epoch;
            }
            Verdict::Continue => {}
            Verdict::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    let best = best.expect("first epoch always improves");
    Ok((best, history))
}

struct NetSession<'a> {
    params: ModelParams<f32>,
    adam: AdamState<f32>,
    grads: ModelParams<f32>,
    order: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    data: &'a TrainingSet,
    config: &'a TrainConfig,
}

impl Session for NetSession<'_> {
    type Snapshot = ModelParams<f32>;

    fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
        self.order.shuffle(&mut self.shuffle_rng);
        let cfg = self.config;
        let mut total = 0.0;
        for (b, chunk) in self.order.chunks(cfg.batch_size).enumerate() {
            let at = |e: Error| match e {
                Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, batch {}: {m}", b + 1)),
                other => other,
            };
            let mut forwards = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &self.data.train[i];
                let f = net::forward(&self.params, s.content(), &cfg.dropout, &mut self.dropout_rng, true).map_err(at)?;
                forwards.push(f);
                labels.push(s.label as f32);
            }
            self.grads.fill_zero();
            let loss = net::backward(&self.params, &forwards, &labels, &mut self.grads).map_err(at)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("epoch {epoch}, batch {}: non-finite loss", b + 1)));
            }
            if let Some(max_norm) = cfg.grad_clip {
                let norm = self.grads.sum_squares().sqrt();
                if norm > max_norm {
                    self.grads.scale((max_norm / norm) as f32);
                }
            }
            adam_step(&mut self.params, &self.grads, &mut self.adam, &cfg.optimizer).map_err(at)?;
            if !self.params.all_finite() {
                return Err(Error::Numerical(format!("epoch {epoch}, batch {}: non-finite parameters", b + 1)));
            }
            total += loss * chunk.len() as f64;
        }
        Ok(total / self.order.len() as f64)
    }

    fn evaluate(&mut self) -> Result<(f64, f64)> {
        evaluate(&self.params, &self.data.val)
    }

    fn snapshot(&self) -> ModelParams<f32> {
        self.params.clone()
    }
}

/// Mean BCE and accuracy at 0.5 of inference-mode predictions.
pub fn evaluate(params: &ModelParams<f32>, data: &[EncodedSentence]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty split"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for s in data {
        let f = net::forward(params, s.content(), &DropoutConfig::none(), &mut unused, false)?;
        loss += bce_loss(f.logit as f64, s.label as f64);
        if u8::from(f.score >= 0.5) == s.label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train with a silent progress callback.
pub fn train(data: &TrainingSet, config: &TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    train_with_progress(data, config, &mut |_| {})
}

/// Fit the student. The embedding has one row per vocabulary entry, so the
/// checkpoint's `vocab_size` is the realized vocabulary size, which can be
/// below the configured cap.
pub fn train_with_progress(
    data: &TrainingSet,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("training and validation splits must both be nonempty"));
    }
    if data.vocab.len() > config.dims.vocab_size {
        return Err(Error::invalid("vocabulary larger than dims.vocab_size"));
    }
    let dims = ModelDims {
        vocab_size: data.vocab.len(),
        max_len: data.max_len,
        ..config.dims
    };
    let params = ModelParams::<f32>::init(dims, config.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ config.dropout.seed.rotate_left(32));
    dropout_rng.set_stream(2);
    let mut session = NetSession {
        adam: AdamState::new(&params),
        grads: ModelParams::zeros(dims),
        params,
        order: (0..data.train.len()).collect(),
        shuffle_rng,
        dropout_rng,
        data,
        config,
    };
    let (best, history) = drive(&mut session, config.max_epochs, config.patience, progress)?;
    let checkpoint = Checkpoint::new(best, data.vocab.clone(), config.clone(), history.clone())?;
    Ok((checkpoint, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Scripted {
        val: Vec<f64>,
        epoch: usize,
    }

    impl Session for Scripted {
        type Snapshot = usize;
        fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
            self.epoch = epoch;
            Ok(0.0)
        }
        fn evaluate(&mut self) -> Result<(f64, f64)> {
            Ok((self.val[self.epoch - 1], 0.0))
        }
        fn snapshot(&self) -> usize {
            self.epoch
        }
    }

    fn run(val: &[f64], max_epochs: usize, patience: usize) -> (usize, TrainHistory) {
        let mut s = Scripted {
            val: val.to_vec(),
            epoch: 0,
        };
        drive(&mut s, max_epochs, patience, &mut |_| {}).unwrap()
    }

    #[test]
    fn patience_one_increasing_loss_stops_after_two() {
        let (snap, h) = run(&[1.0, 2.0, 3.0, 4.0], 4, 1);
        assert_eq!(h.epochs_run(), 2);
        assert_eq!(h.best_epoch, 1);
        assert_eq!(snap, 1);
        assert!(h.stopped_early);
    }

    #[test]
    fn single_epoch_is_not_early_stop() {
        let (_, h) = run(&[1.0], 1, 5);
        assert_eq!(h.epochs_run(), 1);
        assert!(!h.stopped_early);
    }

    #[test]
    fn equal_loss_is_not_improvement() {
        let (snap, h) = run(&[1.0, 1.0, 1.0], 3, 2);
        assert_eq!((snap, h.best_epoch, h.epochs_run()), (1, 1, 3));
        assert!(h.stopped_early);
    }

    #[test]
    fn non_finite_val_loss_is_error() {
        let mut s = Scripted {
            val: vec![1.0, f64::NAN],
            epoch: 0,
        };
        let e = drive(&mut s, 5, 2, &mut |_| {}).unwrap_err();
        assert!(e.is_numerical() && e.to_string().contains("epoch 2"));
    }

    proptest! {
        #[test]
        fn stops_exactly_patience_after_best(val in prop::collection::vec(0.0f64..10.0, 1..30), patience in 1usize..6) {
            let max_epochs = val.len();
            let (snap, h) = run(&val, max_epochs, patience);
            // Reference: first index of the running minimum, then stop once
            // `patience` epochs pass without a strict improvement.
            let mut best = 0;
            let mut stop = None;
            for (i, &v) in val.iter().enumerate() {
                if v < val[best] {
                    best = i;
                }
                if i - best >= patience {
                    stop = Some(i + 1);
                    break;
                }
            }
            prop_assert_eq!(h.best_epoch, best + 1);
            prop_assert_eq!(snap, best + 1);
            prop_assert_eq!(h.stopped_early, stop.is_some());
            prop_assert_eq!(h.epochs_run(), stop.unwrap_or(max_epochs));
            if h.stopped_early {
                prop_assert_eq!(h.epochs_run() - h.best_epoch, patience);
            }
            let min = h.rows.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(h.best().unwrap().val_loss, min);
        }
    }

    fn corpus(n: usize, per: usize) -> (Vec<Report>, Vec<ReportRuleOutput>) {
        let reports: Vec<Report> = (0..n)
            .map(|i| {
                let text = (0..per).map(|j| format!("Finding {i} {j} here.")).collect::<Vec<_>>().join(" ");
                Report::new(format!("r{i:02}"), text)
            })
            .collect();
        let labels = reports
            .iter()
            .map(|r| ReportRuleOutput {
                id: r.id.clone(),
                report_label: 0,
                sentence_labels: vec![0; per],
                findings: vec![],
            })
            .collect();
        (reports, labels)
    }

    #[test]
    fn split_arithmetic() {
        let (c, l) = corpus(10, 3);
        let v = build_vocabulary(&c, 100).unwrap();
        let t = make_training_set(&c, &l, &v, 8, 0.1, 3).unwrap();
        assert_eq!((t.train.len(), t.val.len()), (27, 3));
        assert_eq!(t.val_ids.len(), 1);
        let again = make_training_set(&c, &l, &v, 8, 0.1, 3).unwrap();
        assert_eq!(t.val, again.val);
        assert_eq!(t.train_ids, again.train_ids);
    }

    proptest! {
        #[test]
        fn split_ignores_corpus_order(seed in 0u64..1000, rot in 0usize..12) {
            let (c, l) = corpus(12, 2);
            let v = build_vocabulary(&c, 100).unwrap();
            let a = make_training_set(&c, &l, &v, 8, 0.25, seed).unwrap();
            let mut c2 = c.clone();
            c2.rotate_left(rot);
            c2.swap(0, 11);
            let b = make_training_set(&c2, &l, &v, 8, 0.25, seed).unwrap();
            prop_assert_eq!(&a.val_ids, &b.val_ids);
            prop_assert_eq!(&a.train, &b.train);
            let overlap = a.val_ids.iter().filter(|id| a.train_ids.contains(id)).count();
            prop_assert_eq!(overlap, 0);
        }
    }

    #[test]
    fn split_errors() {
        assert!(make_training_set(&[], &[], &Vocabulary::from_tokens([], 10).unwrap(), 8, 0.1, 0).is_err());
        let (c, l) = corpus(3, 2);
        let v = build_vocabulary(&c, 100).unwrap();
        assert!(make_training_set(&c, &l[..2], &v, 8, 0.1, 0).is_err());
        let mut bad = l.clone();
        bad[0].sentence_labels.pop();
        assert!(make_training_set(&c, &bad, &v, 8, 0.1, 0).is_err());
        assert!(split_ids(&["a".into()], 0.5, 0).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (32, 20, 5));
        assert_eq!(c.optimizer.lr, 0.001);
        assert!(c.validate().is_ok());
        for bad in [
            TrainConfig { validation_fraction: 1.0, ..c.clone() },
            TrainConfig { patience: 0, ..c.clone() },
            TrainConfig { batch_size: 0, ..c.clone() },
            TrainConfig { grad_clip: Some(-1.0), ..c.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        let partial: TrainConfig = serde_json::from_str(r#"{"batch_size": 8}"#).unwrap();
        assert_eq!(partial.batch_size, 8);
        assert_eq!(partial.patience, 5);
    }

    #[test]
    fn history_csv_header() {
        let h = TrainHistory {
            rows: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                val_accuracy: 1.0,
                wall_seconds: 0.125,
            }],
            best_epoch: 1,
            stopped_early: false,
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_loss,val_accuracy,wall_seconds\n1,0.5,0.25,1,0.125\n");
    }
}
