//! Confusion counts, sensitivity/specificity, ROC/AUC, calibration, the
//! rule-vs-model operating-point comparison, and throughput benchmarks.

mod bench;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bench::{bench_throughput, BenchLabeler, BenchReport, ReferenceFigure, REFERENCE_FIGURES};

/// Absolute tolerance for "on the curve".
pub const CURVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_gold(scores: &[(f64, u8)]) -> Result<()> {
    if let Some((_, g)) = scores.iter().find(|(_, g)| *g > 1) {
        return Err(Error::invalid(format!("gold label {g} is not 0 or 1")));
    }
    if let Some((s, _)) = scores.iter().find(|(s, _)| s.is_nan()) {
        return Err(Error::invalid(format!("score {s} is not a number")));
    }
    Ok(())
}

/// Counts with the rule `predicted = score >= threshold`.
pub fn confusion(scores: &[(f64, u8)], threshold: f64) -> Result<Confusion> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores to evaluate"));
    }
    check_gold(scores)?;
    let mut c = Confusion::default();
    for &(s, g) in scores {
        match (s >= threshold, g == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(tp / (tp + fn), tn / (tn + fp))`.
pub fn sens_spec(c: &Confusion) -> Result<(f64, f64)> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::invalid("sensitivity undefined: no abnormal (positive) cases"));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::invalid("specificity undefined: no normal (negative) cases"));
    }
    Ok((
        c.tp as f64 / (c.tp + c.fn_) as f64,
        c.tn as f64 / (c.tn + c.fp) as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `None` for the (0, 0) point above every score.
    pub threshold: Option<f64>,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Highest sensitivity reachable at false-positive rate `fpr`, with
    /// linear interpolation between operating points.
    pub fn tpr_at_fpr(&self, fpr: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.fpr <= fpr && fpr <= b.fpr {
                let t = if b.fpr > a.fpr {
                    a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
                } else {
                    b.tpr
                };
                best = best.max(t);
            }
        }
        best
    }

    /// Lowest false-positive rate that reaches sensitivity `tpr`.
    pub fn fpr_at_tpr(&self, tpr: f64) -> f64 {
        let mut best: f64 = 1.0;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.tpr <= tpr && tpr <= b.tpr {
                let f = if b.tpr > a.tpr {
                    a.fpr + (b.fpr - a.fpr) * (tpr - a.tpr) / (b.tpr - a.tpr)
                } else {
                    a.fpr
                };
                best = best.min(f);
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fpr\n");
        for p in &self.points {
            let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
            out.push_str(&format!("{t},{},{}\n", p.tpr, p.fpr));
        }
        out
    }
}

/// Sweep thresholds over the distinct scores in descending order; tied
/// scores move together. AUC is the trapezoid area, accumulated in integer
/// counts.
pub fn roc(scores: &[(f64, u8)]) -> Result<RocCurve> {
    check_gold(scores)?;
    let pos = scores.iter().filter(|(_, g)| *g == 1).count() as u64;
    let neg = scores.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(format!(
            "ROC needs both classes; got {pos} abnormal and {neg} normal"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: None,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            threshold: Some(s),
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Strictly under the model curve: some threshold beats the rules.
    Below,
    On,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointReport {
    pub n: usize,
    pub rule_sensitivity: f64,
    pub rule_specificity: f64,
    pub model_auc: f64,
    pub model_sensitivity_at_rule_specificity: f64,
    pub model_specificity_at_rule_sensitivity: f64,
    pub relation: Relation,
    pub model_roc: RocCurve,
}

/// Place the rule labeler's single operating point against the model's ROC
/// curve. All three inputs are keyed by report id.
pub fn compare_operating_point(
    model_scores: &[(String, f64)],
    rule_labels: &[(String, u8)],
    gold: &[(String, u8)],
) -> Result<OperatingPointReport> {
    let rules: HashMap<&str, u8> = rule_labels.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let truth: HashMap<&str, u8> = gold.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let scores: HashMap<&str, f64> = model_scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let all: BTreeSet<&str> = rules.keys().chain(truth.keys()).chain(scores.keys()).copied().collect();
    let missing: Vec<String> = all
        .iter()
        .filter(|id| !(rules.contains_key(*id) && truth.contains_key(*id) && scores.contains_key(*id)))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "ids not present in all of scores, rule labels and gold: {}",
            missing.join(", ")
        )));
    }
    let model: Vec<(f64, u8)> = all.iter().map(|id| (scores[id], truth[id])).collect();
    let rule: Vec<(f64, u8)> = all.iter().map(|id| (rules[id] as f64, truth[id])).collect();
    let (rule_sens, rule_spec) = sens_spec(&confusion(&rule, 1.0)?)?;
    let curve = roc(&model)?;
    let rule_fpr = 1.0 - rule_spec;
    let curve_tpr = curve.tpr_at_fpr(rule_fpr);
    let relation = if rule_sens < curve_tpr - CURVE_TOLERANCE {
        Relation::Below
    } else if rule_sens > curve_tpr + CURVE_TOLERANCE {
        Relation::Above
    } else {
        Relation::On
    };
    Ok(OperatingPointReport {
        n: all.len(),
        rule_sensitivity: rule_sens,
        rule_specificity: rule_spec,
        model_auc: curve.auc,
        model_sensitivity_at_rule_specificity: curve_tpr,
        model_specificity_at_rule_sensitivity: 1.0 - curve.fpr_at_tpr(rule_sens),
        relation,
        model_roc: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_score: Option<f64>,
    pub empirical_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

/// Equal-width bins `[k/n, (k+1)/n)`, the last one closed at 1. Scores
/// outside `[0, 1]` land in the end bins.
pub fn calibration(scores: &[(f64, u8)], n_bins: usize) -> Result<Calibration> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    check_gold(scores)?;
    let mut sum = vec![0.0; n_bins];
    let mut pos = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for &(s, g) in scores {
        let k = ((s * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1);
        sum[k] += s;
        pos[k] += g as usize;
        count[k] += 1;
    }
    let total = scores.len() as f64;
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|k| {
            let (mean, rate) = if count[k] > 0 {
                let c = count[k] as f64;
                (Some(sum[k] / c), Some(pos[k] as f64 / c))
            } else {
                (None, None)
            };
            if let (Some(m), Some(r)) = (mean, rate) {
                ece += count[k] as f64 / total * (m - r).abs();
            }
            CalibrationBin {
                lower: k as f64 / n_bins as f64,
                upper: (k + 1) as f64 / n_bins as f64,
                count: count[k],
                mean_score: mean,
                empirical_rate: rate,
            }
        })
        .collect();
    Ok(Calibration { bins, ece })
}

/// The evaluation summary written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub ece: f64,
    pub calibration: Calibration,
    pub roc_points: Vec<RocPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<OperatingPointReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchReport>,
}

pub fn evaluate(scores: &[(f64, u8)], threshold: f64, n_bins: usize) -> Result<MetricsReport> {
    let c = confusion(scores, threshold)?;
    let curve = roc(scores)?;
    let (sensitivity, specificity) = sens_spec(&c)?;
    let cal = calibration(scores, n_bins)?;
    Ok(MetricsReport {
        n: scores.len(),
        threshold,
        confusion: c,
        sensitivity,
        specificity,
        auc: curve.auc,
        ece: cal.ece,
        calibration: cal,
        roc_points: curve.points,
        operating_point: None,
        bench: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_confusion(s: &[(f64, u8)], t: f64) -> Confusion {
        let count = |pred: bool, gold: u8| s.iter().filter(|x| (x.0 >= t) == pred && x.1 == gold).count() as u64;
        Confusion {
            tp: count(true, 1),
            fp: count(true, 0),
            tn: count(false, 0),
            fn_: count(false, 1),
        }
    }

    fn pairwise_auc(s: &[(f64, u8)]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for a in s.iter().filter(|x| x.1 == 1) {
            for b in s.iter().filter(|x| x.1 == 0) {
                pairs += 1.0;
                wins += if a.0 > b.0 { 1.0 } else if a.0 == b.0 { 0.5 } else { 0.0 };
            }
        }
        wins / pairs
    }

    fn loop_ece(s: &[(f64, u8)], n: usize) -> f64 {
        let mut ece = 0.0;
        for k in 0..n {
            let inb: Vec<_> = s
                .iter()
                .filter(|x| {
                    let lo = k as f64 / n as f64;
                    let hi = (k + 1) as f64 / n as f64;
                    x.0 >= lo && (x.0 < hi || (k == n - 1 && x.0 <= 1.0))
                })
                .collect();
            if !inb.is_empty() {
                let m = inb.iter().map(|x| x.0).sum::<f64>() / inb.len() as f64;
                let r = inb.iter().map(|x| x.1 as f64).sum::<f64>() / inb.len() as f64;
                ece += inb.len() as f64 / s.len() as f64 * (m - r).abs();
            }
        }
        ece
    }

    fn both_classes() -> impl Strategy<Value = Vec<(f64, u8)>> {
        prop::collection::vec((0u32..20, 0u8..=1), 2..300)
            .prop_map(|v| v.into_iter().map(|(q, g)| (q as f64 / 19.0, g)).collect::<Vec<_>>())
            .prop_filter("both classes", |v| v.iter().any(|x| x.1 == 1) && v.iter().any(|x| x.1 == 0))
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[(0.9, 1), (0.2, 0)], 0.5).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
        let all = confusion(&[(0.9, 1), (0.2, 0), (0.0, 0)], 0.0).unwrap();
        assert_eq!((all.tp, all.fp), (1, 2));
        assert!(confusion(&[], 0.5).is_err());
        assert!(confusion(&[(0.1, 2)], 0.5).is_err());
        let tie = confusion(&[(0.5, 0)], 0.5).unwrap();
        assert_eq!(tie.fp, 1);
    }

    #[test]
    fn sens_spec_examples() {
        let c = Confusion { tp: 8, fn_: 2, tn: 9, fp: 1 };
        let (se, sp) = sens_spec(&c).unwrap();
        assert!((se - 0.8).abs() < 1e-15 && (sp - 0.9).abs() < 1e-15);
        assert_eq!(sens_spec(&Confusion { tp: 3, tn: 4, ..Default::default() }).unwrap(), (1.0, 1.0));
        let e = sens_spec(&Confusion { tn: 4, ..Default::default() }).unwrap_err();
        assert!(e.to_string().contains("abnormal"));
        let e = sens_spec(&Confusion { tp: 4, ..Default::default() }).unwrap_err();
        assert!(e.to_string().contains("normal"));
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc(&[(0.9, 1), (0.1, 0)]).unwrap().auc, 1.0);
        let tied = roc(&[(0.3, 1), (0.3, 0), (0.3, 0), (0.3, 1)]).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(tied.points.len(), 2);
        assert!(roc(&[(0.3, 1), (0.4, 1)]).is_err());
        let c = roc(&[(0.9, 1), (0.1, 0), (0.5, 1)]).unwrap();
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        assert!(c.to_csv().starts_with("threshold,tpr,fpr\ninf,0,0\n"));
    }

    #[test]
    fn operating_point_examples() {
        let ids: Vec<String> = (0..6).map(|i| format!("r{i}")).collect();
        let gold: Vec<(String, u8)> = ids.iter().zip([1, 0, 1, 0, 0, 1]).map(|(i, g)| (i.clone(), g)).collect();
        let scores: Vec<(String, f64)> = ids.iter().zip([0.9, 0.8, 0.7, 0.2, 0.1, 0.3]).map(|(i, s)| (i.clone(), s)).collect();
        let perfect = compare_operating_point(&scores, &gold, &gold).unwrap();
        assert_eq!((perfect.rule_sensitivity, perfect.rule_specificity), (1.0, 1.0));
        assert_ne!(perfect.relation, Relation::Below);

        let rules: Vec<(String, u8)> = ids.iter().zip([1, 1, 0, 0, 0, 1]).map(|(i, g)| (i.clone(), g)).collect();
        let cast: Vec<(String, f64)> = rules.iter().map(|(i, g)| (i.clone(), *g as f64)).collect();
        assert_eq!(compare_operating_point(&cast, &rules, &gold).unwrap().relation, Relation::On);

        let weak: Vec<(String, u8)> = ids.iter().zip([0, 1, 1, 0, 0, 0]).map(|(i, g)| (i.clone(), g)).collect();
        // Rule point (sens 1/3, spec 2/3); model reaches sens 2/3 at fpr 1/3.
        let r = compare_operating_point(&scores, &weak, &gold).unwrap();
        assert_eq!(r.relation, Relation::Below);

        let e = compare_operating_point(&scores[1..], &rules, &gold).unwrap_err();
        assert!(e.to_string().contains("r0"));
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibration(&[(1.0, 1); 5], 10).unwrap().ece, 0.0);
        let half: Vec<(f64, u8)> = (0..10).map(|i| (0.5, (i % 2) as u8)).collect();
        let c = calibration(&half, 10).unwrap();
        assert_eq!(c.ece, 0.0);
        assert_eq!(c.bins[5].count, 10);
        assert_eq!(calibration(&[(1.0, 1)], 10).unwrap().bins[9].count, 1);
        assert!(calibration(&[(0.5, 1)], 0).is_err());
    }

    proptest! {
        #[test]
        fn confusion_matches_naive(s in both_classes(), t in 0.0f64..1.0) {
            let c = confusion(&s, t).unwrap();
            prop_assert_eq!(c, naive_confusion(&s, t));
            prop_assert_eq!(c.total(), s.len() as u64);
        }

        #[test]
        fn auc_matches_pairwise(s in both_classes()) {
            let a = roc(&s).unwrap().auc;
            prop_assert!((a - pairwise_auc(&s)).abs() <= 1e-12);
        }

        #[test]
        fn roc_monotone(s in both_classes()) {
            let c = roc(&s).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
        }

        #[test]
        fn threshold_monotonicity(s in both_classes(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (se_lo, sp_lo) = sens_spec(&confusion(&s, lo).unwrap()).unwrap();
            let (se_hi, sp_hi) = sens_spec(&confusion(&s, hi).unwrap()).unwrap();
            prop_assert!(se_hi <= se_lo && sp_hi >= sp_lo);
        }

        #[test]
        fn roc_invariant_under_monotone_transform(s in both_classes()) {
            let t: Vec<(f64, u8)> = s.iter().map(|&(x, g)| ((3.0 * x - 1.0).exp(), g)).collect();
            let (a, b) = (roc(&s).unwrap(), roc(&t).unwrap());
            prop_assert_eq!(a.auc, b.auc);
            let pa: Vec<(f64, f64)> = a.points.iter().map(|p| (p.fpr, p.tpr)).collect();
            let pb: Vec<(f64, f64)> = b.points.iter().map(|p| (p.fpr, p.tpr)).collect();
            prop_assert_eq!(pa, pb);
        }

        #[test]
        fn ece_matches_loop(s in prop::collection::vec((0.0f64..=1.0, 0u8..=1), 1..200), n in 1usize..15) {
            let c = calibration(&s, n).unwrap();
            prop_assert!((c.ece - loop_ece(&s, n)).abs() <= 1e-12);
            prop_assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), s.len());
        }
    }
}
