//! The scaled synthetic distillation experiment: generate, rule-label,
//! train the student, and score a held-out report split.

use std::path::PathBuf;
use std::time::Instant;

use radlabel::corpus::{generate_detailed, split_sentences, SyntheticReport, SyntheticSpec};
use radlabel::metrics::{calibration, roc};
use radlabel::net::ModelDims;
use radlabel::rules::{ReportRuleOutput, RuleLabeler};
use radlabel::trainer::{self, predict_report, predict_sentence, split_ids, Checkpoint, TrainConfig, TrainHistory};

pub fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

pub fn load_spec(name: &str) -> SyntheticSpec {
    SyntheticSpec::from_json(&std::fs::read_to_string(spec_path(name)).unwrap()).unwrap()
}

/// Default hyperparameters with the model scaled down.
pub fn scaled_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dims: ModelDims {
            vocab_size: 500,
            embed_dim: 32,
            hidden_units: 64,
            max_len: 32,
        },
        seed,
        ..TrainConfig::default()
    }
}

pub struct HeldOutSentence {
    pub template: usize,
    pub teacher: u8,
    pub score: f64,
}

pub struct Outcome {
    pub spec: SyntheticSpec,
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub seconds: f64,
    /// Sentence-level agreement of the student (at 0.5) with the teacher.
    pub agreement: f64,
    pub report_auc: f64,
    pub sentence_ece: f64,
    /// Synthetic truth vs teacher over every sentence in the corpus.
    pub teacher_truth_agreement: f64,
    pub held_out: Vec<HeldOutSentence>,
    pub n_train_reports: usize,
    pub n_test_reports: usize,
    /// Validation loss recomputed from the returned checkpoint.
    pub restored_val_loss: f64,
}

impl Outcome {
    /// Mean held-out score over one template's sentences.
    pub fn template_mean(&self, name: &str) -> (f64, usize) {
        let t = self.spec.templates.iter().position(|t| t.name.as_deref() == Some(name)).unwrap();
        let s: Vec<f64> = self.held_out.iter().filter(|h| h.template == t).map(|h| h.score).collect();
        (s.iter().sum::<f64>() / s.len() as f64, s.len())
    }
}

pub fn run(spec: SyntheticSpec, config: &TrainConfig) -> Outcome {
    let data: Vec<SyntheticReport> = generate_detailed(&spec).unwrap();
    let labeler = RuleLabeler::builtin();
    let teacher: Vec<ReportRuleOutput> = data.iter().map(|r| labeler.label_report(&r.report).unwrap()).collect();

    let mut agree = 0usize;
    let mut total = 0usize;
    for (r, t) in data.iter().zip(&teacher) {
        assert_eq!(r.sentences.len(), t.sentence_labels.len(), "segmentation drift in {}", r.report.id);
        for (s, &y) in r.sentences.iter().zip(&t.sentence_labels) {
            agree += usize::from(u8::from(s.abnormal) == y);
            total += 1;
        }
    }

    let ids: Vec<String> = data.iter().map(|r| r.report.id.clone()).collect();
    let (pool_ids, _) = split_ids(&ids, 0.2, spec.seed ^ 0x7e57).unwrap();
    let in_pool: std::collections::HashSet<&str> = pool_ids.iter().map(String::as_str).collect();
    let (mut pool, mut pool_labels, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (r, t) in data.iter().zip(&teacher) {
        if in_pool.contains(r.report.id.as_str()) {
            pool.push(r.report.clone());
            pool_labels.push(t.clone());
        } else {
            test.push((r, t));
        }
    }

    let start = Instant::now();
    let vocab = trainer::build_vocabulary(&pool, config.dims.vocab_size).unwrap();
    let set = trainer::make_training_set(&pool, &pool_labels, &vocab, config.dims.max_len, config.validation_fraction, config.seed).unwrap();
    let (checkpoint, history) = trainer::train(&set, config).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let restored_val_loss = trainer::evaluate(&checkpoint.params, &set.val).unwrap().0;

    let mut held_out = Vec::new();
    let mut report_scores = Vec::new();
    for (r, t) in &test {
        let sentences = split_sentences(&r.report);
        for ((s, emitted), &y) in sentences.iter().zip(&r.sentences).zip(&t.sentence_labels) {
            held_out.push(HeldOutSentence {
                template: emitted.template,
                teacher: y,
                score: predict_sentence(&checkpoint, s).unwrap(),
            });
        }
        let ls = predict_report(&checkpoint, &r.report, 0.5).unwrap();
        report_scores.push((ls.score, r.report.gold_label.unwrap()));
    }
    let hits = held_out.iter().filter(|h| u8::from(h.score >= 0.5) == h.teacher).count();
    let pairs: Vec<(f64, u8)> = held_out.iter().map(|h| (h.score, h.teacher)).collect();
    Outcome {
        agreement: hits as f64 / held_out.len() as f64,
        report_auc: roc(&report_scores).unwrap().auc,
        sentence_ece: calibration(&pairs, 10).unwrap().ece,
        teacher_truth_agreement: agree as f64 / total as f64,
        n_train_reports: pool.len(),
        n_test_reports: test.len(),
        spec,
        checkpoint,
        history,
        seconds,
        held_out,
        restored_val_loss,
    }
}
