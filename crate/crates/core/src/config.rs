//! Experiment configuration document.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Schema;
use crate::error::{Error, Result};
use crate::harness::regime::RegimeSpec;
use crate::harness::search::{self, SearchSpace};
use crate::models::{Hyperparams, ModelSpec};
use crate::preprocess::PreprocessConfig;
use crate::synthgen::GeneratorParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Unique label used in reports.
    pub name: String,
    pub family: String,
    /// Fixed overrides of the family defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<Value>,
    /// Dimensions to tune; `"default"` picks the shipped space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchChoice>,
    /// Defaults to on for tree ensembles and off otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<bool>,
    #[serde(default = "default_calibration_folds")]
    pub calibration_folds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SearchChoice {
    Named(String),
    Space(SearchSpace),
}

fn default_calibration_folds() -> usize {
    5
}

impl ModelConfig {
    pub fn calibrated(&self) -> bool {
        self.calibrate
            .unwrap_or(matches!(self.family.as_str(), "random_forest" | "gbdt"))
    }

    pub fn search_space(&self) -> Result<Option<SearchSpace>> {
        match &self.search {
            None => Ok(None),
            Some(SearchChoice::Space(s)) => Ok(Some(s.clone())),
            Some(SearchChoice::Named(n)) if n == "default" => search::default_space(&self.family)
                .map(Some)
                .ok_or_else(|| Error::InvalidArgument(format!("no default search space for `{}`", self.family))),
            Some(SearchChoice::Named(n)) => Err(Error::InvalidArgument(format!("unknown search space `{n}`"))),
        }
    }

    /// Hyperparameters with only the fixed overrides applied.
    pub fn base_hyper(&self) -> Result<Hyperparams> {
        search::merge_hyperparams(&self.family, self.hyper.as_ref(), &Default::default())
    }

    pub fn spec(&self, hyper: Hyperparams) -> ModelSpec {
        ModelSpec {
            hyper,
            calibrate: self.calibrated(),
            calibration_folds: self.calibration_folds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub ece_bins: usize,
    pub threshold: f64,
    /// Also report the two-class Brier sum on the test split.
    pub brier_multiclass: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            ece_bins: 10,
            threshold: 0.5,
            brier_multiclass: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub budget: usize,
    /// Folds of the training split used to score candidates.
    pub folds: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 30, folds: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceOptions {
    pub enabled: bool,
    pub repeats: usize,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            enabled: true,
            repeats: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressOptions {
    /// Rows in the edge-case stress cohort; 0 disables stress scoring.
    pub n: usize,
}

impl Default for StressOptions {
    fn default() -> Self {
        StressOptions { n: 200 }
    }
}

fn default_test_frac() -> f64 {
    0.2
}

fn default_k_folds() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_regimes() -> Vec<RegimeSpec> {
    vec![RegimeSpec::None]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Column schema with edge-case distributions.
    pub schema: PathBuf,
    /// Overrides the target named in the schema when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Run k-fold cross-validation on the training split.
    #[serde(default = "default_true")]
    pub cv: bool,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<RegimeSpec>,
    #[serde(default)]
    pub generators: GeneratorParams,
    #[serde(default)]
    pub stress: StressOptions,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default)]
    pub importance: ImportanceOptions,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = base.join(&cfg.dataset);
        cfg.schema = base.join(&cfg.schema);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn load_schema(&self) -> Result<Schema> {
        let mut schema = Schema::load(&self.schema)?;
        if let Some(t) = &self.target {
            schema.target.name = t.clone();
        }
        Ok(schema)
    }

    pub fn target_name(&self, schema: &Schema) -> String {
        self.target.clone().unwrap_or_else(|| schema.target.name.clone())
    }

    /// Every problem found, reported together before any computation.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !self.dataset.is_file() {
            errs.push(format!("dataset: file {} does not exist", self.dataset.display()));
        }
        let schema = if self.schema.is_file() {
            match self.load_schema() {
                Ok(s) => Some(s),
                Err(e) => {
                    errs.push(format!("schema: {e}"));
                    None
                }
            }
        } else {
            errs.push(format!("schema: file {} does not exist", self.schema.display()));
            None
        };
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            errs.push(format!("test_frac: {} must lie strictly between 0 and 1", self.test_frac));
        }
        if self.cv && self.k_folds < 2 {
            errs.push(format!("k_folds: {} must be at least 2", self.k_folds));
        }
        if self.models.is_empty() {
            errs.push("models: at least one model is required".into());
        }
        let mut names = HashSet::new();
        let mut any_search = false;
        for (i, m) in self.models.iter().enumerate() {
            let at = format!("models[{i}] ({})", m.name);
            if m.name.is_empty() {
                errs.push(format!("models[{i}]: name is empty"));
            }
            if !names.insert(m.name.as_str()) {
                errs.push(format!("{at}: duplicate model name"));
            }
            if let Err(e) = m.base_hyper() {
                errs.push(format!("{at}: {e}"));
            }
            if m.calibrated() && m.calibration_folds < 2 {
                errs.push(format!("{at}: calibration_folds must be at least 2"));
            }
            match m.search_space() {
                Ok(Some(space)) => {
                    any_search = true;
                    if let Err(e) = search::validate_space(&space) {
                        errs.push(format!("{at}: {e}"));
                    }
                    for key in space.keys() {
                        if let Ok(Value::Object(obj)) = m.base_hyper().and_then(|h| Ok(serde_json::to_value(h)?)) {
                            if key == "family" || !obj.contains_key(key) {
                                errs.push(format!("{at}: search names unknown hyperparameter `{key}`"));
                            }
                        }
                    }
                }
                Ok(None) => {}
                Err(e) => errs.push(format!("{at}: {e}")),
            }
        }
        if any_search && self.search.budget == 0 {
            errs.push("search.budget: must be at least 1".into());
        }
        if any_search && self.search.folds < 2 {
            errs.push("search.folds: must be at least 2".into());
        }
        if self.regimes.is_empty() {
            errs.push("regimes: at least one regime is required".into());
        }
        let mut regime_names = HashSet::new();
        let mut needs_edge = self.stress.n > 0;
        for (i, r) in self.regimes.iter().enumerate() {
            if let Err(e) = r.validate() {
                errs.push(format!("regimes[{i}]: {e}"));
            }
            if !regime_names.insert(r.name()) {
                errs.push(format!("regimes[{i}]: duplicate regime `{}`", r.name()));
            }
            needs_edge |= r.uses_edge();
        }
        if let Some(schema) = &schema {
            if needs_edge {
                for c in schema.columns.iter().filter(|c| c.edge.is_none()) {
                    errs.push(format!(
                        "schema: column `{}` has no edge distribution but an edge regime or stress cohort is configured",
                        c.name
                    ));
                }
            }
        }
        if self.metrics.ece_bins == 0 {
            errs.push("metrics.ece_bins: must be at least 1".into());
        }
        if !(self.metrics.threshold >= 0.0 && self.metrics.threshold <= 1.0) {
            errs.push(format!("metrics.threshold: {} is not a probability", self.metrics.threshold));
        }
        if self.importance.enabled && self.importance.repeats == 0 {
            errs.push("importance.repeats: must be at least 1".into());
        }
        if let Err(e) = self.generators.tvae.validate() {
            errs.push(format!("generators.tvae: {e}"));
        }
        if let Err(e) = self.generators.arf.validate() {
            errs.push(format!("generators.arf: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "dataset": "d.csv",
            "schema": "s.json",
            "models": [{"name": "lr", "family": "logistic"}]
        }))
        .unwrap()
    }

    #[test]
    fn defaults() {
        let c = minimal();
        assert_eq!(c.test_frac, 0.2);
        assert_eq!(c.k_folds, 10);
        assert_eq!(c.regimes, vec![RegimeSpec::None]);
        assert_eq!(c.stress.n, 200);
        assert_eq!(c.metrics.ece_bins, 10);
        assert!(!c.models[0].calibrated());
    }

    #[test]
    fn tree_ensembles_calibrate_by_default() {
        let m: ModelConfig = serde_json::from_str(r#"{"name":"rf","family":"random_forest"}"#).unwrap();
        assert!(m.calibrated());
        let m: ModelConfig = serde_json::from_str(r#"{"name":"rf","family":"random_forest","calibrate":false}"#).unwrap();
        assert!(!m.calibrated());
    }

    #[test]
    fn validation_collects_every_error() {
        let mut c = minimal();
        c.test_frac = 1.5;
        c.models.push(c.models[0].clone());
        c.models.push(serde_json::from_str(r#"{"name":"x","family":"svm"}"#).unwrap());
        let Err(Error::Config(errs)) = c.validate() else {
            panic!("expected config errors");
        };
        assert!(errs.iter().any(|e| e.starts_with("dataset")));
        assert!(errs.iter().any(|e| e.starts_with("schema")));
        assert!(errs.iter().any(|e| e.starts_with("test_frac")));
        assert!(errs.iter().any(|e| e.contains("duplicate model")));
        assert!(errs.iter().any(|e| e.contains("svm")));
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: std::result::Result<ExperimentConfig, _> = serde_json::from_value(serde_json::json!({
            "dataset": "d.csv", "schema": "s.json", "models": [], "tets_frac": 0.3
        }));
        assert!(r.is_err());
    }

    #[test]
    fn search_choice_forms() {
        let m: ModelConfig =
            serde_json::from_str(r#"{"name":"lr","family":"logistic","search":"default"}"#).unwrap();
        assert!(m.search_space().unwrap().unwrap().contains_key("l2_strength"));
        let m: ModelConfig = serde_json::from_str(
            r#"{"name":"lr","family":"logistic","search":{"l2_strength":{"log_uniform":[0.001,1.0]}}}"#,
        )
        .unwrap();
        assert_eq!(m.search_space().unwrap().unwrap().len(), 1);
    }
}
