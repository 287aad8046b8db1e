//! Seeded synthetic report generator.
//!
//! Each report draws from its own ChaCha stream `(seed, report index)`, so a
//! corpus is reproducible across platforms and growing `n_reports` only
//! appends reports.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BodyRegion, Report};
use crate::{Error, Result};

/// One sentence pattern. With probability `abnormal_probability` one of the
/// `abnormal` variants is emitted, otherwise one of the `normal` variants.
/// `{name}` placeholders are filled from the spec's slot lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `None` makes the template available to every region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BodyRegion>,
    pub abnormal_probability: f64,
    #[serde(default)]
    pub abnormal: Vec<String>,
    #[serde(default)]
    pub normal: Vec<String>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_reports: usize,
    /// Inclusive `[min, max]`.
    pub sentences_per_report: (usize, usize),
    pub templates: Vec<Template>,
    #[serde(default)]
    pub slots: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "syn".to_string()
}

/// Ground truth for one emitted sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedSentence {
    pub template: usize,
    pub abnormal: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticReport {
    pub report: Report,
    pub sentences: Vec<EmittedSentence>,
}

impl SyntheticSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::invalid("synthetic spec has no templates"));
        }
        let (lo, hi) = self.sentences_per_report;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("sentences_per_report must satisfy 1 <= min <= max, got [{lo}, {hi}]")));
        }
        for (i, t) in self.templates.iter().enumerate() {
            let p = t.abnormal_probability;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("template {i}: abnormal_probability {p} outside [0, 1]")));
            }
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::invalid(format!("template {i}: weight must be positive")));
            }
            if p > 0.0 && t.abnormal.is_empty() {
                return Err(Error::invalid(format!("template {i}: no abnormal variants")));
            }
            if p < 1.0 && t.normal.is_empty() {
                return Err(Error::invalid(format!("template {i}: no normal variants")));
            }
            for v in t.abnormal.iter().chain(&t.normal) {
                for slot in placeholders(v) {
                    match self.slots.get(slot) {
                        Some(fill) if !fill.is_empty() => {}
                        _ => return Err(Error::invalid(format!("template {i}: unknown or empty slot {{{slot}}}"))),
                    }
                }
            }
        }
        Ok(())
    }

    fn regions(&self) -> Vec<BodyRegion> {
        let mut r: Vec<BodyRegion> = self.templates.iter().filter_map(|t| t.region).collect();
        r.sort_unstable();
        r.dedup();
        r
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Report>> {
    Ok(generate_detailed(spec)?.into_iter().map(|r| r.report).collect())
}

/// Like [`generate_synthetic`], also returning which template produced each
/// sentence and whether it was the abnormal phrasing.
pub fn generate_detailed(spec: &SyntheticSpec) -> Result<Vec<SyntheticReport>> {
    spec.validate()?;
    let regions = spec.regions();
    let width = spec.n_reports.max(1).to_string().len().max(6);
    (0..spec.n_reports)
        .map(|i| Ok(generate_one(spec, &regions, i, width)))
        .collect()
}

fn generate_one(spec: &SyntheticSpec, regions: &[BodyRegion], index: usize, width: usize) -> SyntheticReport {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);

    let region = (!regions.is_empty()).then(|| regions[rng.random_range(0..regions.len())]);
    let pool: Vec<usize> = (0..spec.templates.len())
        .filter(|&t| match (spec.templates[t].region, region) {
            (None, _) => true,
            (Some(a), Some(b)) => a == b,
            (Some(_), None) => false,
        })
        .collect();
    let total: f64 = pool.iter().map(|&t| spec.templates[t].weight).sum();

    let (lo, hi) = spec.sentences_per_report;
    let n = rng.random_range(lo..=hi);
    let mut sentences = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = *pool.last().expect("region always has a template");
        for &t in &pool {
            pick -= spec.templates[t].weight;
            if pick < 0.0 {
                chosen = t;
                break;
            }
        }
        let template = &spec.templates[chosen];
        let abnormal = rng.random::<f64>() < template.abnormal_probability;
        let variants = if abnormal { &template.abnormal } else { &template.normal };
        let variant = &variants[rng.random_range(0..variants.len())];
        sentences.push(EmittedSentence {
            template: chosen,
            abnormal,
            text: render(variant, &spec.slots, &mut rng),
        });
    }

    let text = sentences.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
    let gold = sentences.iter().any(|s| s.abnormal);
    SyntheticReport {
        report: Report {
            id: format!("{}-{:0width$}", spec.id_prefix, index + 1),
            text,
            body_region: region,
            gold_label: Some(gold as u8),
        },
        sentences,
    }
}

fn placeholders(s: &str) -> impl Iterator<Item = &str> {
    s.split('{').skip(1).filter_map(|rest| rest.split_once('}').map(|(name, _)| name))
}

fn render(variant: &str, slots: &BTreeMap<String, Vec<String>>, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(variant.len() + 16);
    let mut rest = variant;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("validated placeholder");
        let fill = &slots[&rest[open + 1..close]];
        out.push_str(&fill[rng.random_range(0..fill.len())]);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);

    let mut text = out.trim().to_string();
    if !text.ends_with(['.', '!', '?']) {
        text.push('.');
    }
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => text,
    }
}
