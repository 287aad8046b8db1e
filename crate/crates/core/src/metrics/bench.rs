use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Report;
use crate::rules::RuleLabeler;
use crate::trainer::{label_corpus, Checkpoint, SortOrder};
use crate::{Error, Result};

pub enum BenchLabeler<'a> {
    Rules(&'a RuleLabeler),
    Model(&'a Checkpoint),
}

impl BenchLabeler<'_> {
    fn name(&self) -> &'static str {
        match self {
            BenchLabeler::Rules(_) => "rules",
            BenchLabeler::Model(_) => "model",
        }
    }

    fn run(&self, corpus: &[Report]) -> Result<()> {
        match self {
            BenchLabeler::Rules(l) => corpus.par_iter().try_for_each(|r| l.label_report(r).map(drop)),
            BenchLabeler::Model(c) => label_corpus(c, corpus, 0.5, SortOrder::None).map(drop),
        }
    }
}

/// A published throughput figure, reported for context only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigure {
    pub system: String,
    pub reports: u64,
    pub seconds: f64,
    pub hardware: String,
    pub reports_per_second: f64,
}

/// Literature values: (system, reports, seconds, hardware).
pub const REFERENCE_FIGURES: [(&str, u64, f64, &str); 2] = [
    ("rules", 1000, 254.0, "80 x 2.5GHz CPU cores"),
    ("model", 7486, 239.0, "8 x Tesla V100 GPU"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub labeler: String,
    pub n_reports: usize,
    pub repetitions: usize,
    pub threads: usize,
    pub available_cores: usize,
    pub warmup_seconds: f64,
    pub timings_seconds: Vec<f64>,
    pub reports_per_second: f64,
    pub mean_ms_per_report: f64,
    pub stddev_ms_per_report: f64,
    /// Published figures, not measured here.
    pub literature_reference: Vec<ReferenceFigure>,
}

/// One untimed warm-up pass, then `repetitions` timed passes on a pool of
/// `threads` workers.
pub fn bench_throughput(labeler: &BenchLabeler, corpus: &[Report], repetitions: usize, threads: usize) -> Result<BenchReport> {
    if corpus.is_empty() {
        return Err(Error::invalid("bench needs a nonempty corpus"));
    }
    if repetitions < 3 {
        return Err(Error::invalid("bench needs at least 3 repetitions"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let time = || -> Result<f64> {
        let t = Instant::now();
        pool.install(|| labeler.run(corpus))?;
        Ok(t.elapsed().as_secs_f64())
    };
    let warmup_seconds = time()?;
    let timings = (0..repetitions).map(|_| time()).collect::<Result<Vec<_>>>()?;
    let n = corpus.len() as f64;
    let per_report: Vec<f64> = timings.iter().map(|t| 1000.0 * t / n).collect();
    let mean = per_report.iter().sum::<f64>() / per_report.len() as f64;
    let var = per_report.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (per_report.len() - 1) as f64;
    let total: f64 = timings.iter().sum();
    Ok(BenchReport {
        labeler: labeler.name().to_string(),
        n_reports: corpus.len(),
        repetitions,
        threads: pool.current_num_threads(),
        available_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
        warmup_seconds,
        timings_seconds: timings,
        reports_per_second: n * repetitions as f64 / total.max(f64::MIN_POSITIVE),
        mean_ms_per_report: mean,
        stddev_ms_per_report: var.sqrt(),
        literature_reference: REFERENCE_FIGURES
            .iter()
            .map(|&(system, reports, seconds, hardware)| ReferenceFigure {
                system: system.to_string(),
                reports,
                seconds,
                hardware: hardware.to_string(),
                reports_per_second: reports as f64 / seconds,
            })
            .collect(),
    })
}
