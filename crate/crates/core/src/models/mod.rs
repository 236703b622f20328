//! Probabilistic classifiers behind one contract: fit on a standardized
//! feature matrix, predict the positive-class probability per row.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, CalibratedModel};
use crate::error::{Error, Result};

pub mod forest;
pub mod gbdt;
pub mod kan;
pub mod logistic;
pub mod tree;

pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use gbdt::{Gbdt, GbdtParams};
pub use kan::{Kan, KanParams};
pub use logistic::{Logistic, LogisticParams};

pub trait ProbabilisticClassifier: Send + Sync {
    fn n_features(&self) -> usize;

    /// Positive-class probability for every row of `x`.
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>>;
}

pub(crate) fn check_dims(expected: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_training_data(x: ArrayView2<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature matrix contains {v}")));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    Ok(())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean binary log-loss of probabilities, clipped away from 0 and 1.
pub fn log_loss(p: &[f64], y: &[u8]) -> f64 {
    let eps = 1e-15;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / p.len().max(1) as f64
}

/// Hyperparameters of one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Hyperparams {
    Logistic(LogisticParams),
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
    Kan(KanParams),
}

impl Hyperparams {
    pub fn family(&self) -> &'static str {
        match self {
            Hyperparams::Logistic(_) => "logistic",
            Hyperparams::RandomForest(_) => "random_forest",
            Hyperparams::Gbdt(_) => "gbdt",
            Hyperparams::Kan(_) => "kan",
        }
    }

    pub fn default_for(family: &str) -> Option<Hyperparams> {
        Some(match family {
            "logistic" => Hyperparams::Logistic(LogisticParams::default()),
            "random_forest" => Hyperparams::RandomForest(ForestParams::default()),
            "gbdt" => Hyperparams::Gbdt(GbdtParams::default()),
            "kan" => Hyperparams::Kan(KanParams::default()),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Logistic(p) => p.validate(),
            Hyperparams::RandomForest(p) => p.validate(),
            Hyperparams::Gbdt(p) => p.validate(),
            Hyperparams::Kan(p) => p.validate(),
        }
    }

    pub fn fit(&self, x: ArrayView2<f64>, y: &[u8], seed: u64) -> Result<FittedModel> {
        self.validate()?;
        Ok(match self {
            Hyperparams::Logistic(p) => FittedModel::Logistic(Logistic::fit(x, y, p)?),
            Hyperparams::RandomForest(p) => FittedModel::RandomForest(RandomForest::fit(x, y, p, seed)?),
            Hyperparams::Gbdt(p) => FittedModel::Gbdt(Gbdt::fit(x, y, p, seed)?),
            Hyperparams::Kan(p) => FittedModel::Kan(Kan::fit(x, y, p, seed)?),
        })
    }
}

/// A model family with its hyperparameters and calibration choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyper: Hyperparams,
    /// Wrap the model in cross-validated sigmoid calibration.
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default = "default_calibration_folds")]
    pub calibration_folds: usize,
}

fn default_calibration_folds() -> usize {
    5
}

impl ModelSpec {
    pub fn new(hyper: Hyperparams) -> Self {
        ModelSpec {
            hyper,
            calibrate: false,
            calibration_folds: default_calibration_folds(),
        }
    }

    pub fn calibrated(mut self, on: bool) -> Self {
        self.calibrate = on;
        self
    }

    pub fn fit(&self, x: ArrayView2<f64>, y: &[u8], seed: u64) -> Result<FittedModel> {
        if self.calibrate {
            let cal = calibration::calibrate_cv(&self.hyper, x, y, self.calibration_folds, seed)?;
            Ok(FittedModel::Calibrated(cal))
        } else {
            self.hyper.fit(x, y, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    Logistic(Logistic),
    RandomForest(RandomForest),
    Gbdt(Gbdt),
    Kan(Kan),
    Calibrated(CalibratedModel<FittedModel>),
}

impl ProbabilisticClassifier for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Logistic(m) => m.n_features(),
            FittedModel::RandomForest(m) => m.n_features(),
            FittedModel::Gbdt(m) => m.n_features(),
            FittedModel::Kan(m) => m.n_features(),
            FittedModel::Calibrated(m) => m.n_features(),
        }
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            FittedModel::Logistic(m) => m.predict_proba(x),
            FittedModel::RandomForest(m) => m.predict_proba(x),
            FittedModel::Gbdt(m) => m.predict_proba(x),
            FittedModel::Kan(m) => m.predict_proba(x),
            FittedModel::Calibrated(m) => m.predict_proba(x),
        }
    }
}

/// Versioned JSON envelope for a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: FittedModel,
}

impl ModelDocument {
    pub const VERSION: u32 = 1;

    pub fn new(model: FittedModel) -> Self {
        ModelDocument {
            format_version: Self::VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != Self::VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}
