//! Classification, probability-quality and selective-prediction metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pairs(p: &[f64], y: &[u8]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: p.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("metric needs at least one prediction".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Rows with `p >= t` are predicted positive.
pub fn confusion_at_threshold(p: &[f64], y: &[u8], t: f64) -> Result<ConfusionCounts> {
    check_pairs(p, y)?;
    let mut c = ConfusionCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
    for (&p, &y) in p.iter().zip(y) {
        match (p >= t, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Zero denominators yield 0.
pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    ClassificationMetrics {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    }
}

/// Area under the ROC curve in Mann–Whitney form: the fraction of
/// (positive, negative) pairs ordered correctly, ties counting one half.
pub fn auc_roc(p: &[f64], y: &[u8]) -> Result<f64> {
    check_pairs(p, y)?;
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUC needs both labels".into()));
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    // Counting in half-units keeps the sum exact.
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && p[order[j]] == p[order[i]] {
            j += 1;
        }
        let (mut pos, mut neg) = (0u64, 0u64);
        for &r in &order[i..j] {
            if y[r] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean of `max(p, 1 - p)`.
pub fn avg_confidence(p: &[f64]) -> f64 {
    p.iter().map(|&v| v.max(1.0 - v)).sum::<f64>() / p.len().max(1) as f64
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Mean binary entropy in nats.
pub fn avg_entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| -(xlnx(v) + xlnx(1.0 - v))).sum::<f64>() / p.len().max(1) as f64
}

/// Mean squared error of the positive-class probability.
pub fn brier(p: &[f64], y: &[u8]) -> Result<f64> {
    check_pairs(p, y)?;
    Ok(p.iter().zip(y).map(|(&p, &y)| (p - f64::from(y)).powi(2)).sum::<f64>() / p.len() as f64)
}

/// Brier score summed over both classes; exactly twice [`brier`].
pub fn brier_two_class(p: &[f64], y: &[u8]) -> Result<f64> {
    check_pairs(p, y)?;
    Ok(p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let y = f64::from(y);
            (p - y).powi(2) + ((1.0 - p) - (1.0 - y)).powi(2)
        })
        .sum::<f64>()
        / p.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub members: Vec<usize>,
    pub accuracy: f64,
    pub confidence: f64,
    /// `|B_m| / N`
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<Bin>,
}

impl CalibrationBins {
    /// `Σ_m |B_m|/N · |acc(B_m) - conf(B_m)|`
    pub fn ece(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| b.weight * (b.accuracy - b.confidence).abs())
            .sum()
    }
}

/// Groups samples into `m` equal-width confidence bins over `[lo, hi]`.
/// The last bin is closed on the right; values outside the range are
/// clamped into the end bins.
pub fn calibration_bins(confidence: &[f64], correct: &[bool], m: usize, lo: f64, hi: f64) -> Result<CalibrationBins> {
    if m == 0 || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("need m >= 1 and lo < hi, got m={m}, [{lo}, {hi}]")));
    }
    if confidence.len() != correct.len() {
        return Err(Error::DimensionMismatch {
            expected: correct.len(),
            found: confidence.len(),
        });
    }
    let mut members = vec![Vec::new(); m];
    for (i, &c) in confidence.iter().enumerate() {
        let idx = ((c - lo) / (hi - lo) * m as f64).floor();
        let idx = if idx.is_nan() { 0 } else { (idx.max(0.0) as usize).min(m - 1) };
        members[idx].push(i);
    }
    let n = confidence.len().max(1) as f64;
    let bins = members
        .into_iter()
        .map(|members| {
            let k = members.len() as f64;
            let (accuracy, confidence) = if members.is_empty() {
                (0.0, 0.0)
            } else {
                (
                    members.iter().filter(|&&i| correct[i]).count() as f64 / k,
                    members.iter().map(|&i| confidence[i]).sum::<f64>() / k,
                )
            };
            Bin {
                members,
                accuracy,
                confidence,
                weight: k / n,
            }
        })
        .collect();
    Ok(CalibrationBins { lo, hi, bins })
}

/// ECE of a binary classifier: confidence `max(p, 1 - p)` binned into `m`
/// equal-width bins over `[0.5, 1]`, correctness judged at threshold 0.5.
pub fn ece(p: &[f64], y: &[u8], m: usize) -> Result<f64> {
    check_pairs(p, y)?;
    let conf: Vec<f64> = p.iter().map(|&v| v.max(1.0 - v)).collect();
    let correct: Vec<bool> = p.iter().zip(y).map(|(&p, &y)| (p >= 0.5) == (y == 1)).collect();
    Ok(calibration_bins(&conf, &correct, m, 0.5, 1.0)?.ece())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcCurve {
    pub coverage: Vec<f64>,
    pub risk: Vec<f64>,
    pub auc_rc: f64,
}

/// Risk–coverage curve: samples sorted by confidence (stable, descending);
/// point `k` is the error rate at threshold 0.5 among the first `k`.
/// The area is the trapezoid rule over the `n` points.
pub fn risk_coverage(p: &[f64], y: &[u8]) -> Result<RcCurve> {
    check_pairs(p, y)?;
    let n = p.len();
    let conf: Vec<f64> = p.iter().map(|&v| v.max(1.0 - v)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    let mut errors = 0usize;
    let mut coverage = Vec::with_capacity(n);
    let mut risk = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        if (p[i] >= 0.5) != (y[i] == 1) {
            errors += 1;
        }
        coverage.push((k + 1) as f64 / n as f64);
        risk.push(errors as f64 / (k + 1) as f64);
    }
    let auc_rc = (1..n)
        .map(|k| 0.5 * (coverage[k] - coverage[k - 1]) * (risk[k] + risk[k - 1]))
        .sum();
    Ok(RcCurve { coverage, risk, auc_rc })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub q0: f64,
    pub q50: f64,
    pub q99: f64,
    pub mean: f64,
    pub std: f64,
}

/// Nearest-rank quantile: the value at rank `max(1, ceil(q·n))` of the
/// sorted sample.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn cohort_summary(p: &[f64]) -> Result<CohortSummary> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("cohort summary of an empty cohort".into()));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(CohortSummary {
        q0: nearest_rank(&sorted, 0.0),
        q50: nearest_rank(&sorted, 0.5),
        q99: nearest_rank(&sorted, 0.99),
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMetrics {
    pub avg_confidence: f64,
    pub avg_entropy: f64,
    pub brier: f64,
    pub ece: f64,
    /// Two-class Brier sum, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brier_two_class: Option<f64>,
}

/// All threshold and probability metrics for one prediction vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionCounts,
    pub classification: ClassificationMetrics,
    /// Absent when the labels hold a single class.
    pub auc_roc: Option<f64>,
    pub probability: ProbabilityMetrics,
}

pub fn evaluate(p: &[f64], y: &[u8], threshold: f64, ece_bins: usize) -> Result<Evaluation> {
    let confusion = confusion_at_threshold(p, y, threshold)?;
    let auc = match auc_roc(p, y) {
        Ok(a) => Some(a),
        Err(Error::SingleClass(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        confusion,
        classification: classification_metrics(&confusion),
        auc_roc: auc,
        probability: ProbabilityMetrics {
            avg_confidence: avg_confidence(p),
            avg_entropy: avg_entropy(p),
            brier: brier(p, y)?,
            ece: ece(p, y, ece_bins)?,
            brier_two_class: None,
        },
    })
}
