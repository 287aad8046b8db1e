//! The `radlabel` command line: synthesize corpora, rule-label them, train
//! the student model, predict soft labels, evaluate, and benchmark.

pub mod config;

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use radlabel::corpus::{self, CorpusFormat, Report, SyntheticSpec};
use radlabel::metrics::{self, bench_throughput, compare_operating_point, BenchLabeler};
use radlabel::rules::{Lexicon, NegationRules, ReportRuleOutput, RuleLabeler};
use radlabel::trainer::{self, Checkpoint, LabeledScore, SortOrder};
use radlabel::{io, Error, Result};
use rayon::prelude::*;
use serde::Serialize;

pub use config::RunConfig;
use config::{input_exists, output_dir_exists, sidecar, Provenance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "radlabel", version, about = "Rule-based and distilled BiLSTM labeling of radiology reports")]
pub struct Cli {
    /// Seed for synthesis and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for labeling and inference (default: all cores).
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from a template spec.
    Gen(GenArgs),
    /// Run the rule labeler over a corpus.
    Label(LabelArgs),
    /// Train the student model on rule labels.
    Train(TrainArgs),
    /// Score reports with a trained checkpoint.
    Predict(PredictArgs),
    /// Evaluate predictions against gold labels.
    Eval(EvalArgs),
    /// Measure labeling throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the spec's report count.
    #[arg(long)]
    pub n_reports: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// jsonl or openi_xml.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// Lexicon TSV (default: built-in).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Negation rules TSV (default: built-in).
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub rules: RuleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub rule_labels: Option<PathBuf>,
    /// Checkpoint path (.rlck).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// History CSV (default: <out>.history.csv).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub spatial_dropout: Option<f64>,
    #[arg(long)]
    pub recurrent_dropout: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SortArg {
    None,
    Uncertainty,
    Score,
}

impl From<SortArg> for SortOrder {
    fn from(s: SortArg) -> Self {
        match s {
            SortArg::None => SortOrder::None,
            SortArg::Uncertainty => SortOrder::UncertaintyDesc,
            SortArg::Score => SortOrder::ScoreDesc,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub sort: Option<SortArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL from `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Corpus carrying gold_label for every predicted report.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    /// Rule-label JSONL from `label`, for the operating-point comparison.
    #[arg(long)]
    pub rule_labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ROC points as CSV.
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelerArg {
    Rules,
    Model,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum)]
    pub labeler: LabelerArg,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub rules: RuleArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    /// JSON output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` (including the program name) and run. Returns the exit
/// code; errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_errors = args.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            if json_errors {
                report_error(e.render().to_string().trim(), EXIT_INPUT, true);
            } else {
                let _ = e.print();
            }
            return EXIT_INPUT;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            report_error(&e.to_string(), code, cli.json_errors);
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn report_error(message: &str, code: i32, json: bool) {
    if json {
        let v = serde_json::json!({ "error": message, "exit_code": code });
        eprintln!("{v}");
    } else {
        eprintln!("radlabel: error: {message}");
    }
}

/// Merge defaults, the config file, and global flags.
pub fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        c.seed = cli.seed;
    }
    if cli.parallel.is_some() {
        c.parallel = cli.parallel;
    }
    Ok(c)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut config = base_config(cli)?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &config),
        Command::Label(a) => {
            apply_corpus(&mut config, &a.corpus);
            apply_rules(&mut config, &a.rules);
            cmd_label(a, &config)
        }
        Command::Train(a) => {
            apply_corpus(&mut config, &a.corpus);
            apply_train(&mut config, a);
            cmd_train(a, &config)
        }
        Command::Predict(a) => {
            apply_corpus(&mut config, &a.corpus);
            if let Some(t) = a.threshold {
                config.threshold = t;
            }
            if let Some(s) = a.sort {
                config.sort = s.into();
            }
            cmd_predict(a, &config)
        }
        Command::Eval(a) => {
            if let Some(f) = &a.format {
                config.corpus_format = f.clone();
            }
            if let Some(t) = a.threshold {
                config.threshold = t;
            }
            if let Some(b) = a.bins {
                config.calibration_bins = b;
            }
            cmd_eval(a, &config)
        }
        Command::Bench(a) => {
            apply_corpus(&mut config, &a.corpus);
            apply_rules(&mut config, &a.rules);
            if let Some(r) = a.reps {
                config.bench_repetitions = r;
            }
            cmd_bench(a, &config)
        }
    }
}

fn apply_corpus(c: &mut RunConfig, a: &CorpusArgs) {
    if let Some(f) = &a.format {
        c.corpus_format = f.clone();
    }
}

fn apply_rules(c: &mut RunConfig, a: &RuleArgs) {
    if a.lexicon.is_some() {
        c.lexicon = a.lexicon.clone();
    }
    if a.rules.is_some() {
        c.negation_rules = a.rules.clone();
    }
}

fn apply_train(c: &mut RunConfig, a: &TrainArgs) {
    let t = &mut c.train;
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.batch_size => t.batch_size);
    set!(a.epochs => t.max_epochs);
    set!(a.patience => t.patience);
    set!(a.validation_fraction => t.validation_fraction);
    set!(a.lr => t.optimizer.lr);
    set!(a.beta1 => t.optimizer.beta1);
    set!(a.beta2 => t.optimizer.beta2);
    set!(a.epsilon => t.optimizer.epsilon);
    set!(a.embed_dim => t.dims.embed_dim);
    set!(a.hidden_units => t.dims.hidden_units);
    set!(a.vocab_size => t.dims.vocab_size);
    set!(a.max_len => t.dims.max_len);
    set!(a.spatial_dropout => t.dropout.spatial_rate);
    set!(a.recurrent_dropout => t.dropout.recurrent_rate);
    if a.grad_clip.is_some() {
        t.grad_clip = a.grad_clip;
    }
    if let Some(s) = c.seed {
        t.seed = s;
    }
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads())
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

fn load_corpus(path: &Path, config: &RunConfig) -> Result<Vec<Report>> {
    let format: CorpusFormat = config.corpus_format.parse()?;
    let reports = corpus::load_corpus(path, format)?;
    if reports.is_empty() {
        return Err(Error::invalid(format!("corpus {} is empty", path.display())));
    }
    Ok(reports)
}

fn labeler(config: &RunConfig) -> Result<RuleLabeler> {
    let lexicon = match &config.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::builtin(),
    };
    let rules = match &config.negation_rules {
        Some(p) => NegationRules::load(p)?,
        None => NegationRules::builtin(),
    };
    Ok(RuleLabeler::new(lexicon, rules))
}

fn provenance<'a>(command: &'a str, inputs: &[(&'static str, &Path)], config: &'a RunConfig) -> Provenance<'a> {
    Provenance {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs: inputs.iter().map(|(k, p)| (*k, p.display().to_string())).collect(),
        effective_config: config,
    }
}

fn write_sidecar(out: &Path, p: &Provenance) -> Result<()> {
    let json = serde_json::to_vec_pretty(p).map_err(|e| Error::invalid(e.to_string()))?;
    io::write_atomic(&sidecar(out), &json)
}

/// JSON object with the provenance block placed under `"provenance"`.
fn with_provenance<T: Serialize>(body: &T, p: &Provenance) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(body).map_err(|e| Error::invalid(e.to_string()))?;
    let pv = serde_json::to_value(p).map_err(|e| Error::invalid(e.to_string()))?;
    v.as_object_mut()
        .expect("reports serialize as objects")
        .insert("provenance".to_string(), pv);
    let mut bytes = serde_json::to_vec_pretty(&v).map_err(|e| Error::invalid(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn cmd_gen(a: &GenArgs, config: &RunConfig) -> Result<()> {
    input_exists("spec", &a.spec)?;
    output_dir_exists(&a.out)?;
    config.validate()?;
    let mut spec = SyntheticSpec::from_json(&io::read_to_string(&a.spec)?)
        .map_err(|e| Error::invalid(format!("{}: {e}", a.spec.display())))?;
    if let Some(s) = config.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n_reports {
        spec.n_reports = n;
    }
    let reports = corpus::generate_synthetic(&spec)?;
    io::write_atomic(&a.out, corpus::to_jsonl(&reports)?.as_bytes())?;
    let mut echo = config.clone();
    echo.seed = Some(spec.seed);
    write_sidecar(&a.out, &provenance("gen", &[("spec", &a.spec)], &echo))
}

/// Label every report on a pool of `threads` workers; output order follows
/// input order.
pub fn label_reports(labeler: &RuleLabeler, reports: &[Report], threads: usize) -> Result<Vec<ReportRuleOutput>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| reports.par_iter().map(|r| labeler.label_report(r)).collect())
}

pub fn cmd_label(a: &LabelArgs, config: &RunConfig) -> Result<()> {
    input_exists("corpus", &a.corpus.corpus)?;
    output_dir_exists(&a.out)?;
    config.validate()?;
    let reports = load_corpus(&a.corpus.corpus, config)?;
    let out = label_reports(&labeler(config)?, &reports, config.threads())?;
    io::write_atomic(&a.out, io::to_jsonl(&out)?.as_bytes())?;
    write_sidecar(&a.out, &provenance("label", &[("corpus", &a.corpus.corpus)], config))
}

pub fn cmd_train(a: &TrainArgs, config: &RunConfig) -> Result<()> {
    config.validate()?;
    if a.dry_run {
        let json = serde_json::to_string_pretty(config).map_err(|e| Error::invalid(e.to_string()))?;
        println!("{json}");
        return Ok(());
    }
    let labels_path = a
        .rule_labels
        .as_deref()
        .ok_or_else(|| Error::invalid("--rule-labels is required"))?;
    let out = a.out.as_deref().ok_or_else(|| Error::invalid("--out is required"))?;
    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    input_exists("corpus", &a.corpus.corpus)?;
    input_exists("rule labels", labels_path)?;
    output_dir_exists(out)?;
    output_dir_exists(&history_path)?;

    let reports = load_corpus(&a.corpus.corpus, config)?;
    let labels: Vec<ReportRuleOutput> = io::from_jsonl(labels_path, &io::read_to_string(labels_path)?)?;
    let t = &config.train;
    let vocab = trainer::build_vocabulary(&reports, t.dims.vocab_size)?;
    let set = trainer::make_training_set(&reports, &labels, &vocab, t.dims.max_len, t.validation_fraction, t.seed)?;
    eprintln!(
        "training on {} sentences ({} reports), validating on {} ({} reports), vocabulary {}",
        set.train.len(),
        set.train_ids.len(),
        set.val.len(),
        set.val_ids.len(),
        vocab.len()
    );
    let (checkpoint, history) = trainer::train_with_progress(&set, t, &mut |r| {
        eprintln!(
            "epoch {:>3}/{}  train_loss {:.6}  val_loss {:.6}  val_accuracy {:.4}  {:.1}s",
            r.epoch, t.max_epochs, r.train_loss, r.val_loss, r.val_accuracy, r.wall_seconds
        );
    })?;
    checkpoint.save(out)?;
    io::write_atomic(&history_path, history.to_csv().as_bytes())?;
    let p = provenance(
        "train",
        &[("corpus", &a.corpus.corpus), ("rule_labels", labels_path)],
        config,
    );
    write_sidecar(out, &p)?;
    write_sidecar(&history_path, &p)?;
    eprintln!(
        "best epoch {} of {}{}",
        history.best_epoch,
        history.epochs_run(),
        if history.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, config: &RunConfig) -> Result<()> {
    input_exists("checkpoint", &a.checkpoint)?;
    input_exists("corpus", &a.corpus.corpus)?;
    output_dir_exists(&a.out)?;
    config.validate()?;
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let reports = load_corpus(&a.corpus.corpus, config)?;
    let scores = thread_pool(config)?.install(|| trainer::label_corpus(&checkpoint, &reports, config.threshold, config.sort))?;
    io::write_atomic(&a.out, io::to_jsonl(&scores)?.as_bytes())?;
    write_sidecar(
        &a.out,
        &provenance("predict", &[("checkpoint", &a.checkpoint), ("corpus", &a.corpus.corpus)], config),
    )
}

pub fn cmd_eval(a: &EvalArgs, config: &RunConfig) -> Result<()> {
    input_exists("predictions", &a.predictions)?;
    input_exists("gold corpus", &a.gold)?;
    if let Some(r) = &a.rule_labels {
        input_exists("rule labels", r)?;
    }
    output_dir_exists(&a.out)?;
    config.validate()?;
    let preds: Vec<LabeledScore> = io::from_jsonl(&a.predictions, &io::read_to_string(&a.predictions)?)?;
    let gold_reports = load_corpus(&a.gold, config)?;
    let gold: HashMap<&str, u8> = gold_reports
        .iter()
        .filter_map(|r| r.gold_label.map(|g| (r.id.as_str(), g)))
        .collect();
    let missing: Vec<&str> = preds
        .iter()
        .map(|p| p.report_id.as_str())
        .filter(|id| !gold.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("no gold label for: {}", missing.join(", "))));
    }
    let pairs: Vec<(f64, u8)> = preds.iter().map(|p| (p.score, gold[p.report_id.as_str()])).collect();
    let mut report = metrics::evaluate(&pairs, config.threshold, config.calibration_bins)?;
    if let Some(path) = &a.rule_labels {
        let rules: Vec<ReportRuleOutput> = io::from_jsonl(path, &io::read_to_string(path)?)?;
        let rules: Vec<(String, u8)> = rules.into_iter().map(|r| (r.id, r.report_label)).collect();
        let scores: Vec<(String, f64)> = preds.iter().map(|p| (p.report_id.clone(), p.score)).collect();
        let gold: Vec<(String, u8)> = preds.iter().map(|p| (p.report_id.clone(), gold[p.report_id.as_str()])).collect();
        report.operating_point = Some(compare_operating_point(&scores, &rules, &gold)?);
    }
    let mut inputs: Vec<(&'static str, &Path)> = vec![("predictions", &a.predictions), ("gold", &a.gold)];
    if let Some(r) = &a.rule_labels {
        inputs.push(("rule_labels", r));
    }
    let p = provenance("eval", &inputs, config);
    io::write_atomic(&a.out, &with_provenance(&report, &p)?)?;
    if let Some(csv) = &a.roc_csv {
        output_dir_exists(csv)?;
        let curve = metrics::RocCurve {
            points: report.roc_points.clone(),
            auc: report.auc,
        };
        io::write_atomic(csv, curve.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, config: &RunConfig) -> Result<()> {
    input_exists("corpus", &a.corpus.corpus)?;
    let checkpoint = match (a.labeler, &a.checkpoint) {
        (LabelerArg::Model, None) => return Err(Error::invalid("--labeler model requires --checkpoint")),
        (LabelerArg::Model, Some(p)) => {
            input_exists("checkpoint", p)?;
            Some(Checkpoint::load(p)?)
        }
        (LabelerArg::Rules, _) => None,
    };
    if let Some(out) = &a.out {
        output_dir_exists(out)?;
    }
    config.validate()?;
    let reports = load_corpus(&a.corpus.corpus, config)?;
    let rules = labeler(config)?;
    let which = match &checkpoint {
        Some(c) => BenchLabeler::Model(c),
        None => BenchLabeler::Rules(&rules),
    };
    let report = bench_throughput(&which, &reports, config.bench_repetitions, config.threads())?;
    let mut inputs: Vec<(&'static str, &Path)> = vec![("corpus", &a.corpus.corpus)];
    if let Some(c) = &a.checkpoint {
        inputs.push(("checkpoint", c));
    }
    let bytes = with_provenance(&report, &provenance("bench", &inputs, config))?;
    match &a.out {
        Some(out) => io::write_atomic(out, &bytes),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}
