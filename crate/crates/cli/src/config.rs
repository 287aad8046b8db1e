use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use radlabel::trainer::{SortOrder, TrainConfig};
use radlabel::{io, Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. Precedence: command-line flag,
/// then `--config` file, then these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the synthetic spec seed (gen) and the training seed.
    pub seed: Option<u64>,
    /// Worker threads for labeling and inference; `None` means all cores.
    pub parallel: Option<usize>,
    pub corpus_format: String,
    pub lexicon: Option<PathBuf>,
    pub negation_rules: Option<PathBuf>,
    pub threshold: f64,
    pub sort: SortOrder,
    pub calibration_bins: usize,
    pub bench_repetitions: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            parallel: None,
            corpus_format: "jsonl".to_string(),
            lexicon: None,
            negation_rules: None,
            threshold: 0.5,
            sort: SortOrder::None,
            calibration_bins: 10,
            bench_repetitions: 3,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            record: e.line(),
            message: e.to_string(),
        })
    }

    pub fn threads(&self) -> usize {
        self.parallel
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.parallel == Some(0) {
            return Err(Error::invalid("--parallel must be at least 1"));
        }
        if self.calibration_bins == 0 {
            return Err(Error::invalid("calibration_bins must be at least 1"));
        }
        if self.bench_repetitions < 3 {
            return Err(Error::invalid("bench_repetitions must be at least 3"));
        }
        self.corpus_format.parse::<radlabel::corpus::CorpusFormat>()?;
        self.train.validate()
    }
}

/// What every output artifact records about the run that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a> {
    pub command: &'a str,
    pub tool_version: &'static str,
    pub inputs: BTreeMap<&'static str, String>,
    pub effective_config: &'a RunConfig,
}

pub fn input_exists(what: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {} does not exist", path.display())))
    }
}

pub fn output_dir_exists(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(Error::invalid(format!("output directory {} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

/// `out.jsonl` -> `out.jsonl.meta.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
