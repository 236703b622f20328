//! Report document produced by an experiment run.

use serde::{Deserialize, Serialize};

use super::regime::{Augmentation, RegimeSpec};
use super::search::SearchOutcome;
use crate::eval::{CohortSummary, Evaluation, RcCurve};
use crate::importance::{ImportanceResult, RankTable};
use crate::models::Hyperparams;
use crate::synthgen::GeneratorKind;

/// One metric vector; `auc_roc` is `None` only when the labels hold a
/// single class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_roc: Option<f64>,
    pub avg_confidence: f64,
    pub avg_entropy: f64,
    pub brier: f64,
    pub ece: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 9] = [
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc_roc",
        "avg_confidence",
        "avg_entropy",
        "brier",
        "ece",
    ];

    pub fn from_evaluation(e: &Evaluation) -> MetricSet {
        MetricSet {
            accuracy: e.classification.accuracy,
            precision: e.classification.precision,
            recall: e.classification.recall,
            f1: e.classification.f1,
            auc_roc: e.auc_roc,
            avg_confidence: e.probability.avg_confidence,
            avg_entropy: e.probability.avg_entropy,
            brier: e.probability.brier,
            ece: e.probability.ece,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1" => Some(self.f1),
            "auc_roc" => self.auc_roc,
            "avg_confidence" => Some(self.avg_confidence),
            "avg_entropy" => Some(self.avg_entropy),
            "brier" => Some(self.brier),
            "ece" => Some(self.ece),
            _ => None,
        }
    }

    fn from_fn(mut f: impl FnMut(&str) -> f64) -> MetricSet {
        MetricSet {
            accuracy: f("accuracy"),
            precision: f("precision"),
            recall: f("recall"),
            f1: f("f1"),
            auc_roc: Some(f("auc_roc")),
            avg_confidence: f("avg_confidence"),
            avg_entropy: f("avg_entropy"),
            brier: f("brier"),
            ece: f("ece"),
        }
    }
}

/// Fold metrics with their mean and population standard deviation. Folds
/// whose evaluation side holds a single class are listed in `excluded`
/// and left out of the aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<MetricSet>,
    pub excluded: Vec<usize>,
    pub mean: MetricSet,
    pub std: MetricSet,
}

impl CvSummary {
    pub fn aggregate(per_fold: Vec<(usize, MetricSet)>) -> CvSummary {
        let (kept, excluded): (Vec<_>, Vec<_>) = per_fold.into_iter().partition(|(_, m)| m.auc_roc.is_some());
        let folds: Vec<MetricSet> = kept.into_iter().map(|(_, m)| m).collect();
        let n = folds.len().max(1) as f64;
        let mean = MetricSet::from_fn(|k| folds.iter().filter_map(|m| m.get(k)).sum::<f64>() / n);
        let std = MetricSet::from_fn(|k| {
            let mu = mean.get(k).unwrap_or(0.0);
            (folds.iter().filter_map(|m| m.get(k)).map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt()
        });
        CvSummary {
            folds,
            excluded: excluded.into_iter().map(|(i, _)| i).collect(),
            mean,
            std,
        }
    }

    /// `"0.72 ± 0.11"` at two decimals.
    pub fn display(&self, metric: &str) -> Option<String> {
        Some(format!("{:.2} ± {:.2}", self.mean.get(metric)?, self.std.get(metric)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressResult {
    pub summary: CohortSummary,
    pub proba: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub family: String,
    pub calibrated: bool,
    pub test: Evaluation,
    pub rc: RcCurve,
    pub test_proba: Vec<f64>,
    pub cv: Option<CvSummary>,
    pub stress: Option<StressResult>,
    pub importance: Option<ImportanceResult>,
}

impl ModelReport {
    pub fn test_metrics(&self) -> MetricSet {
        MetricSet::from_evaluation(&self.test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub kind: GeneratorKind,
    pub fitted_rows: usize,
    /// Discriminator accuracy per adversarial round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arf_rounds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tvae_final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: String,
    pub spec: RegimeSpec,
    /// Rows added to the final training split.
    pub augmentation: Augmentation,
    pub generator: Option<GeneratorInfo>,
    pub models: Vec<ModelReport>,
    pub rank_table: Option<RankTable>,
}

impl RegimeReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedModel {
    pub name: String,
    pub family: String,
    pub calibrated: bool,
    pub hyper: Hyperparams,
    pub search: Option<SearchOutcome>,
}

/// A documented difference between this implementation and the reference
/// methodology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub topic: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub dataset: String,
    pub target: String,
    pub n_rows: usize,
    pub n_positives: usize,
    pub train_rows: usize,
    pub train_positives: usize,
    pub test_rows: usize,
    pub test_positives: usize,
    pub test_frac: f64,
    pub k_folds: Option<usize>,
    pub threshold: f64,
    pub ece_bins: usize,
    pub stress_cohort: usize,
    pub importance_repeats: Option<usize>,
    pub kept_columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub features: Vec<String>,
    pub deviations: Vec<Deviation>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub metadata: Metadata,
    pub tuning: Vec<TunedModel>,
    pub test_labels: Vec<u8>,
    pub regimes: Vec<RegimeReport>,
}

impl ExperimentReport {
    pub const VERSION: u32 = 1;

    pub fn regime(&self, name: &str) -> Option<&RegimeReport> {
        self.regimes.iter().find(|r| r.regime == name)
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<ExperimentReport> {
        let r: ExperimentReport = serde_json::from_str(text)?;
        if r.format_version != Self::VERSION {
            return Err(crate::Error::InvalidArgument(format!(
                "unsupported report format version {}",
                r.format_version
            )));
        }
        Ok(r)
    }
}

/// Change in one metric after retraining on a feature subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub regime: String,
    pub model: String,
    pub metric: String,
    pub original: Option<f64>,
    pub retrained: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub keep: Vec<String>,
    pub removed: Vec<String>,
    pub report: ExperimentReport,
    pub deltas: Vec<MetricDelta>,
}
