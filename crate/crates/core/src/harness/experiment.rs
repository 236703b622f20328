//! Split, tune, cross-validate, evaluate, stress and rank.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regime::{augment_training_fold, Augmentation, RegimeSpec};
use super::report::*;
use super::search::{merge_hyperparams, random_search};
use crate::config::{ExperimentConfig, ModelConfig};
use crate::data::{load_csv, stratified_kfold, stratified_split, RowId, Table};
use crate::error::{Error, Result};
use crate::eval::{auc_roc, brier_two_class, cohort_summary, evaluate, risk_coverage};
use crate::importance::{average_ranks, permutation_importance};
use crate::data::ColumnSchema;
use crate::importance::ImportanceResult;
use crate::models::{FittedModel, Hyperparams, ModelSpec, ProbabilisticClassifier};
use crate::preprocess::{FittedPipeline, PreprocessConfig};
use crate::rng::{derive_seed, tag};
use crate::synthgen::{sample_edge_cases, FittedGenerator, GeneratorKind, GeneratorParams};

/// Preprocessing fitted on one training side, with the evaluation side
/// already transformed.
struct Prepared {
    pipeline: FittedPipeline,
    train: Table,
    eval_x: Array2<f64>,
    eval_y: Vec<u8>,
    eval_ids: Vec<RowId>,
}

fn prepare(train: &Table, eval: &Table, cfg: &PreprocessConfig) -> Result<Prepared> {
    let pipeline = FittedPipeline::fit(train, cfg)?;
    let imputed = pipeline.impute(train)?;
    let eval_x = pipeline.transform(eval)?;
    Ok(Prepared {
        train: imputed,
        eval_x,
        eval_y: eval.target().to_vec(),
        eval_ids: eval.row_ids().to_vec(),
        pipeline,
    })
}

/// Scope tag for seeds: fold index, or the final train/test fit.
const FINAL: u64 = u64::MAX;

fn fit_generators(
    kinds: &BTreeSet<GeneratorKind>,
    p: &Prepared,
    params: &GeneratorParams,
    root: u64,
    scope: u64,
) -> Result<BTreeMap<GeneratorKind, FittedGenerator>> {
    let minority = p.train.class_rows(1);
    kinds
        .par_iter()
        .map(|&k| {
            let seed = derive_seed(root, &[tag("generator"), scope, tag(k.name())]);
            Ok((k, FittedGenerator::fit(k, &minority, params, seed)?))
        })
        .collect()
}

struct Augmented {
    x: Array2<f64>,
    y: Vec<u8>,
    info: Augmentation,
}

fn augmented(
    p: &Prepared,
    regime: &RegimeSpec,
    gens: &BTreeMap<GeneratorKind, FittedGenerator>,
    root: u64,
    scope: u64,
) -> Result<Augmented> {
    let g = regime.generator().and_then(|k| gens.get(&k));
    let seed = derive_seed(root, &[tag("augment"), scope, tag(&regime.name())]);
    let (t, info) = augment_training_fold(&p.train, &p.eval_ids, regime, g, seed)?;
    Ok(Augmented {
        x: p.pipeline.encode(&t)?,
        y: t.target().to_vec(),
        info,
    })
}

fn model_seed(root: u64, scope: u64, model: &str) -> u64 {
    derive_seed(root, &[tag("model"), scope, tag(model)])
}

fn generator_kinds(regimes: &[RegimeSpec]) -> BTreeSet<GeneratorKind> {
    regimes.iter().filter_map(RegimeSpec::generator).collect()
}

fn tune(
    cfg: &ExperimentConfig,
    m: &ModelConfig,
    folds: &[Prepared],
) -> Result<TunedModel> {
    let space = m.search_space()?;
    let (hyper, search) = match space {
        None => (m.base_hyper()?, None),
        Some(space) => {
            log::info!("tuning {} ({} candidates)", m.name, cfg.search.budget);
            let seed = derive_seed(cfg.seed, &[tag("search"), tag(&m.name)]);
            let objective = |c: &super::search::Candidate| -> Result<f64> {
                let h = merge_hyperparams(&m.family, m.hyper.as_ref(), c)?;
                let aucs = folds
                    .par_iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let y = f.train.target();
                        let x = f.pipeline.encode(&f.train)?;
                        let fitted = h.fit(x.view(), y, derive_seed(seed, &[tag("candidate"), i as u64]))?;
                        auc_roc(&fitted.predict_proba(f.eval_x.view())?, &f.eval_y)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
            };
            let out = random_search(&space, cfg.search.budget, seed, objective)?;
            (merge_hyperparams(&m.family, m.hyper.as_ref(), &out.best)?, Some(out))
        }
    };
    Ok(TunedModel {
        name: m.name.clone(),
        family: m.family.clone(),
        calibrated: m.calibrated(),
        hyper,
        search,
    })
}

fn deviations() -> Vec<Deviation> {
    let d = |topic: &str, detail: &str| Deviation {
        topic: topic.into(),
        detail: detail.into(),
    };
    vec![
        d("hyperparameter_search", "seeded uniform random search instead of a Tree-structured Parzen Estimator"),
        d(
            "tuning_protocol",
            "each model is tuned once, uncalibrated, on mean cross-validated AUC without augmentation; the chosen hyperparameters are reused in every regime",
        ),
        d("brier", "binary Brier score: mean squared error of the positive-class probability"),
        d("ece", "binary ECE bins the max-class confidence over [0.5, 1]"),
        d(
            "tvae",
            "simplified TVAE: tanh MLP encoder and decoder, standardized Gaussian heads for numerics without mode-specific normalization, softmax heads for categoricals",
        ),
        d("gradient_boosting", "generic second-order gradient boosting stands in for XGBoost and CatBoost"),
        d("excluded_components", "TabPFN, CTGAN and TabSyn are not implemented"),
    ]
}

fn evaluate_cv(
    cfg: &ExperimentConfig,
    train: &Table,
    specs: &[(String, ModelSpec)],
) -> Result<Vec<Vec<CvSummary>>> {
    let plan = stratified_kfold(train, cfg.k_folds, derive_seed(cfg.seed, &[tag("cv_folds")]))?;
    log::info!("cross-validation: {} folds", plan.k());
    let folds: Vec<Prepared> = (0..plan.k())
        .into_par_iter()
        .map(|f| {
            let (tr, ev) = plan.split(f);
            prepare(&train.take_rows(&tr), &train.take_rows(&ev), &cfg.preprocess)
        })
        .collect::<Result<_>>()?;
    let kinds = generator_kinds(&cfg.regimes);
    let gens: Vec<BTreeMap<GeneratorKind, FittedGenerator>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, p)| fit_generators(&kinds, p, &cfg.generators, cfg.seed, f as u64))
        .collect::<Result<_>>()?;
    let nr = cfg.regimes.len();
    let aug: Vec<Augmented> = (0..folds.len() * nr)
        .into_par_iter()
        .map(|i| {
            let (f, r) = (i / nr, i % nr);
            augmented(&folds[f], &cfg.regimes[r], &gens[f], cfg.seed, f as u64)
        })
        .collect::<Result<_>>()?;
    let nm = specs.len();
    let metrics: Vec<MetricSet> = (0..folds.len() * nr * nm)
        .into_par_iter()
        .map(|i| {
            let (fr, m) = (i / nm, i % nm);
            let f = fr / nr;
            let a = &aug[fr];
            let (name, spec) = &specs[m];
            let model = spec.fit(a.x.view(), &a.y, model_seed(cfg.seed, f as u64, name))?;
            let p = model.predict_proba(folds[f].eval_x.view())?;
            let e = evaluate(&p, &folds[f].eval_y, cfg.metrics.threshold, cfg.metrics.ece_bins)?;
            Ok(MetricSet::from_evaluation(&e))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(nr);
    for r in 0..nr {
        let mut per_model = Vec::with_capacity(nm);
        for m in 0..nm {
            let per_fold: Vec<(usize, MetricSet)> = (0..folds.len()).map(|f| (f, metrics[(f * nr + r) * nm + m])).collect();
            let s = CvSummary::aggregate(per_fold);
            if !s.excluded.is_empty() {
                log::warn!(
                    "{} / {}: folds {:?} have a single class on the evaluation side and were excluded",
                    cfg.regimes[r].name(),
                    specs[m].0,
                    s.excluded
                );
            }
            per_model.push(s);
        }
        out.push(per_model);
    }
    Ok(out)
}

/// Validates `cfg` and loads its dataset. Returns the table and the target
/// column name.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Table, String)> {
    cfg.validate()?;
    let schema = cfg.load_schema()?;
    let target = cfg.target_name(&schema);
    let table = load_csv(&cfg.dataset, &schema, &target)?;
    Ok((table, target))
}

/// The train/test split every run with this config and seed uses.
pub fn split_dataset(cfg: &ExperimentConfig, table: &Table) -> Result<(Table, Table)> {
    stratified_split(table, cfg.test_frac, derive_seed(cfg.seed, &[tag("split")]))
}

/// Runs the configured experiment on the configured dataset.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (table, target) = load_dataset(cfg)?;
    let mut report = run_on_table(cfg, &table)?;
    report.metadata.target = target;
    Ok(report)
}

/// Runs the experiment on an already-loaded table.
pub fn run_on_table(cfg: &ExperimentConfig, table: &Table) -> Result<ExperimentReport> {
    let root = cfg.seed;
    let (train, test) = split_dataset(cfg, table)?;
    log::info!(
        "split: train {} ({} positive), test {} ({} positive)",
        train.n_rows(),
        train.positives(),
        test.n_rows(),
        test.positives()
    );

    let search_folds: Vec<Prepared> = if cfg.models.iter().any(|m| m.search.is_some()) {
        let plan = stratified_kfold(&train, cfg.search.folds, derive_seed(root, &[tag("search_folds")]))?;
        (0..plan.k())
            .into_par_iter()
            .map(|f| {
                let (tr, ev) = plan.split(f);
                prepare(&train.take_rows(&tr), &train.take_rows(&ev), &cfg.preprocess)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let tuning: Vec<TunedModel> = cfg
        .models
        .iter()
        .map(|m| tune(cfg, m, &search_folds))
        .collect::<Result<_>>()?;
    drop(search_folds);
    let specs: Vec<(String, ModelSpec)> = cfg
        .models
        .iter()
        .zip(&tuning)
        .map(|(m, t)| (m.name.clone(), m.spec(t.hyper.clone())))
        .collect();

    let cv = if cfg.cv {
        Some(evaluate_cv(cfg, &train, &specs)?)
    } else {
        None
    };

    log::info!("final fit on the training split");
    let fin = prepare(&train, &test, &cfg.preprocess)?;
    let kinds = generator_kinds(&cfg.regimes);
    let gens = fit_generators(&kinds, &fin, &cfg.generators, root, FINAL)?;
    let stress_x = if cfg.stress.n > 0 {
        let cohort = stress_cohort(&fin.train.schema(), &fin.pipeline, cfg.stress.n, root)?;
        Some(fin.pipeline.encode(&cohort)?)
    } else {
        None
    };
    let groups = fin.pipeline.groups();
    let nm = specs.len();
    let aug: Vec<Augmented> = cfg
        .regimes
        .par_iter()
        .map(|r| augmented(&fin, r, &gens, root, FINAL))
        .collect::<Result<_>>()?;
    let reports: Vec<ModelReport> = (0..cfg.regimes.len() * nm)
        .into_par_iter()
        .map(|i| {
            let (r, m) = (i / nm, i % nm);
            let regime = cfg.regimes[r].name();
            let (name, spec) = &specs[m];
            let a = &aug[r];
            let model = spec.fit(a.x.view(), &a.y, model_seed(root, FINAL, name))?;
            let p = model.predict_proba(fin.eval_x.view())?;
            let mut test_eval = evaluate(&p, &fin.eval_y, cfg.metrics.threshold, cfg.metrics.ece_bins)?;
            if cfg.metrics.brier_multiclass {
                test_eval.probability.brier_two_class = Some(brier_two_class(&p, &fin.eval_y)?);
            }
            let rc = risk_coverage(&p, &fin.eval_y)?;
            let stress = match &stress_x {
                Some(sx) => {
                    let proba = model.predict_proba(sx.view())?;
                    Some(StressResult {
                        summary: cohort_summary(&proba)?,
                        proba,
                    })
                }
                None => None,
            };
            let importance = if cfg.importance.enabled {
                let seed = derive_seed(root, &[tag("importance"), tag(&regime), tag(name)]);
                Some(permutation_importance(
                    &model,
                    fin.eval_x.view(),
                    &fin.eval_y,
                    &groups,
                    cfg.importance.repeats,
                    seed,
                )?)
            } else {
                None
            };
            Ok(ModelReport {
                model: name.clone(),
                family: spec.hyper.family().to_string(),
                calibrated: spec.calibrate,
                test: test_eval,
                rc,
                test_proba: p,
                cv: cv.as_ref().map(|c| c[r][m].clone()),
                stress,
                importance,
            })
        })
        .collect::<Result<_>>()?;

    let mut reports = reports.into_iter();
    let mut regimes = Vec::with_capacity(cfg.regimes.len());
    for (r, spec) in cfg.regimes.iter().enumerate() {
        let models: Vec<ModelReport> = reports.by_ref().take(nm).collect();
        let rank_table = if cfg.importance.enabled {
            let res: Vec<_> = models
                .iter()
                .map(|m| (m.model.clone(), m.importance.clone().expect("importance enabled")))
                .collect();
            Some(average_ranks(&res)?)
        } else {
            None
        };
        let generator = spec.generator().and_then(|k| gens.get(&k)).map(|g| GeneratorInfo {
            kind: g.kind(),
            fitted_rows: g.fingerprint().rows().len(),
            arf_rounds: g.arf_rounds().map(<[f64]>::to_vec),
            tvae_final_loss: g.tvae_loss().and_then(|l| l.last().copied()),
        });
        regimes.push(RegimeReport {
            regime: spec.name(),
            spec: spec.clone(),
            augmentation: aug[r].info.clone(),
            generator,
            models,
            rank_table,
        });
    }

    let mut notes = vec![
        "hyperparameters are tuned once without augmentation and reused for every regime".to_string(),
        "generators are fitted on the imputed positive rows of each training side only".to_string(),
    ];
    if !cfg.cv {
        notes.push("cross-validation disabled".into());
    }
    let metadata = Metadata {
        tool: "tabrisk".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: root,
        dataset: cfg
            .dataset
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        target: cfg.target.clone().unwrap_or_default(),
        n_rows: table.n_rows(),
        n_positives: table.positives(),
        train_rows: train.n_rows(),
        train_positives: train.positives(),
        test_rows: test.n_rows(),
        test_positives: test.positives(),
        test_frac: cfg.test_frac,
        k_folds: cfg.cv.then_some(cfg.k_folds),
        threshold: cfg.metrics.threshold,
        ece_bins: cfg.metrics.ece_bins,
        stress_cohort: cfg.stress.n,
        importance_repeats: cfg.importance.enabled.then_some(cfg.importance.repeats),
        kept_columns: fin.pipeline.kept_columns.clone(),
        dropped_columns: fin.pipeline.dropped_columns.clone(),
        features: fin.pipeline.feature_names(),
        deviations: deviations(),
        notes,
    };
    Ok(ExperimentReport {
        format_version: ExperimentReport::VERSION,
        metadata,
        tuning,
        test_labels: fin.eval_y,
        regimes,
    })
}

/// A fitted pipeline and the models trained on one regime of the final
/// training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedBundle {
    pub format_version: u32,
    pub seed: u64,
    pub regime: RegimeSpec,
    pub augmentation: Augmentation,
    pub pipeline: FittedPipeline,
    pub models: Vec<TrainedModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub name: String,
    pub spec: ModelSpec,
    pub model: FittedModel,
}

impl TrainedBundle {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedBundle> {
        let b: TrainedBundle = serde_json::from_str(text)?;
        if b.format_version != Self::VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model bundle format version {}",
                b.format_version
            )));
        }
        Ok(b)
    }

    /// Features of `t` in the bundle's encoded space.
    pub fn transform(&self, t: &Table) -> Result<Array2<f64>> {
        self.pipeline.transform(t)
    }
}

/// Model specs from the config, with hyperparameters taken from `tuned`
/// where present and from the config's fixed values otherwise.
pub fn model_specs(cfg: &ExperimentConfig, tuned: Option<&BTreeMap<String, Hyperparams>>) -> Result<Vec<(String, ModelSpec)>> {
    cfg.models
        .iter()
        .map(|m| {
            let hyper = match tuned.and_then(|t| t.get(&m.name)) {
                Some(h) => h.clone(),
                None => m.base_hyper()?,
            };
            Ok((m.name.clone(), m.spec(hyper)))
        })
        .collect()
}

/// Generator of `kind` fitted exactly as a full run fits it on the final
/// training split, with the pipeline it was fitted after.
pub fn fit_final_generator(
    cfg: &ExperimentConfig,
    train: &Table,
    test: &Table,
    kind: GeneratorKind,
) -> Result<(FittedPipeline, FittedGenerator)> {
    let fin = prepare(train, test, &cfg.preprocess)?;
    let mut gens = fit_generators(&BTreeSet::from([kind]), &fin, &cfg.generators, cfg.seed, FINAL)?;
    let g = gens.remove(&kind).expect("generator was fitted");
    Ok((fin.pipeline, g))
}

/// Trains every model of `specs` on `regime` exactly as the final fit of a
/// full run does; with the run's tuned hyperparameters the models are
/// identical to the ones behind its report.
pub fn train_final(
    cfg: &ExperimentConfig,
    train: &Table,
    test: &Table,
    regime: &RegimeSpec,
    specs: &[(String, ModelSpec)],
) -> Result<TrainedBundle> {
    regime.validate()?;
    let fin = prepare(train, test, &cfg.preprocess)?;
    let kinds = generator_kinds(std::slice::from_ref(regime));
    let gens = fit_generators(&kinds, &fin, &cfg.generators, cfg.seed, FINAL)?;
    let a = augmented(&fin, regime, &gens, cfg.seed, FINAL)?;
    let models = specs
        .par_iter()
        .map(|(name, spec)| {
            Ok(TrainedModel {
                name: name.clone(),
                spec: spec.clone(),
                model: spec.fit(a.x.view(), &a.y, model_seed(cfg.seed, FINAL, name))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainedBundle {
        format_version: TrainedBundle::VERSION,
        seed: cfg.seed,
        regime: regime.clone(),
        augmentation: a.info,
        pipeline: fin.pipeline,
        models,
    })
}

/// The edge cohort a full run scores, drawn over the columns the pipeline
/// keeps.
pub fn stress_cohort(schema: &[ColumnSchema], pipeline: &FittedPipeline, n: usize, seed: u64) -> Result<Table> {
    let cols: Vec<ColumnSchema> = pipeline
        .kept_columns
        .iter()
        .map(|k| {
            schema
                .iter()
                .find(|c| &c.name == k)
                .cloned()
                .ok_or_else(|| Error::MissingColumn(k.clone()))
        })
        .collect::<Result<_>>()?;
    sample_edge_cases(&cols, n, derive_seed(seed, &[tag("stress_cohort")]))
}

/// Permutation importance seeded as in a full run.
pub fn importance_for(
    bundle: &TrainedBundle,
    model: &TrainedModel,
    x: &Array2<f64>,
    y: &[u8],
    repeats: usize,
) -> Result<ImportanceResult> {
    let seed = derive_seed(bundle.seed, &[tag("importance"), tag(&bundle.regime.name()), tag(&model.name)]);
    permutation_importance(&model.model, x.view(), y, &bundle.pipeline.groups(), repeats, seed)
}

const DELTA_METRICS: [&str; 7] = ["accuracy", "precision", "recall", "f1", "auc_roc", "brier", "ece"];

/// Reruns the experiment on `keep` (source columns, kept in schema order)
/// and lists per-metric changes against `original`.
pub fn retrain_on_selected_features(
    cfg: &ExperimentConfig,
    original: &ExperimentReport,
    keep: &[String],
) -> Result<RetrainReport> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep list is empty".into()));
    }
    cfg.validate()?;
    let schema = cfg.load_schema()?;
    let table = load_csv(&cfg.dataset, &schema, &cfg.target_name(&schema))?;
    retrain_on_table(cfg, &table, original, keep)
}

pub fn retrain_on_table(
    cfg: &ExperimentConfig,
    table: &Table,
    original: &ExperimentReport,
    keep: &[String],
) -> Result<RetrainReport> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep list is empty".into()));
    }
    let names = table.column_names();
    if let Some(k) = keep.iter().find(|k| !names.contains(k)) {
        return Err(Error::UnknownColumn(k.clone()));
    }
    let (kept, removed): (Vec<String>, Vec<String>) = names.into_iter().partition(|n| keep.contains(n));
    let restricted = table.select_columns(&kept)?;
    let mut report = run_on_table(cfg, &restricted)?;
    report.metadata.target = original.metadata.target.clone();
    let mut deltas = Vec::new();
    for r in &report.regimes {
        for m in &r.models {
            let before = original
                .regime(&r.regime)
                .and_then(|o| o.model(&m.model))
                .map(ModelReport::test_metrics);
            let after = m.test_metrics();
            for metric in DELTA_METRICS {
                let o = before.and_then(|b| b.get(metric));
                let n = after.get(metric);
                deltas.push(MetricDelta {
                    regime: r.regime.clone(),
                    model: m.model.clone(),
                    metric: metric.into(),
                    original: o,
                    retrained: n,
                    delta: o.zip(n).map(|(o, n)| n - o),
                });
            }
        }
    }
    Ok(RetrainReport {
        keep: kept,
        removed,
        report,
        deltas,
    })
}

/// Loads a report written by [`ExperimentReport::to_json`].
pub fn load_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentReport::from_json(&text)
}

/// Hyperparameters a run settled on, by model name.
pub fn tuned_hyperparams(report: &ExperimentReport) -> BTreeMap<String, Hyperparams> {
    report.tuning.iter().map(|t| (t.name.clone(), t.hyper.clone())).collect()
}
