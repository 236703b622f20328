use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use tabrisk::benchmark;
use tabrisk::config::ExperimentConfig;
use tabrisk::data::{Schema, Table};
use tabrisk::eval::{brier_two_class, cohort_summary, evaluate as score, risk_coverage};
use tabrisk::harness::{self, ExperimentReport, RegimeSpec, TrainedBundle};
use tabrisk::importance::average_ranks;
use tabrisk::models::ProbabilisticClassifier;
use tabrisk::rng::{derive_seed, tag};
use tabrisk::synthgen::{sample_edge_cases, GeneratorKind};
use tabrisk::Error;

use crate::figures::{self, slug};
use crate::tables::{self, TestMetrics};
use crate::Common;

fn load_config(c: &Common, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_bundle(path: &Path) -> Result<TrainedBundle> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TrainedBundle::from_json(&text)?)
}

/// Config, its dataset split, and the bundle trained on that split.
fn bundle_and_test(c: &Common, config: &Path, models: &Path) -> Result<(ExperimentConfig, TrainedBundle, Table)> {
    let mut cfg = load_config(c, config)?;
    let bundle = load_bundle(models)?;
    if c.seed.is_none() {
        cfg.seed = bundle.seed;
    } else if cfg.seed != bundle.seed {
        return Err(Error::InvalidArgument(format!(
            "models were trained on the split of seed {} but seed {} was requested",
            bundle.seed, cfg.seed
        ))
        .into());
    }
    let (table, _) = harness::load_dataset(&cfg)?;
    let (_, test) = harness::split_dataset(&cfg, &table)?;
    Ok((cfg, bundle, test))
}

fn write_report_outputs(report: &ExperimentReport, out: &Path) -> Result<()> {
    tables::write_report_tables(report, &out.join("tables"))?;
    figures::write_report_figures(report, &out.join("figures"))
}

pub fn run(c: &Common, config: &Path, no_cv: bool, brier_multiclass: bool) -> Result<()> {
    let mut cfg = load_config(c, config)?;
    if no_cv {
        cfg.cv = false;
    }
    if brier_multiclass {
        cfg.metrics.brier_multiclass = true;
    }
    let report = harness::run_experiment(&cfg)?;
    let out = &cfg.out_dir;
    write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
    write_report_outputs(&report, out)?;
    log::info!("wrote {}", out.join("report.json").display());
    Ok(())
}

pub fn split(c: &Common, config: &Path) -> Result<()> {
    let cfg = load_config(c, config)?;
    let (table, _) = harness::load_dataset(&cfg)?;
    let target = cfg.load_schema()?.target;
    let (train, test) = harness::split_dataset(&cfg, &table)?;
    let dir = cfg.out_dir.join("split");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    train.write_csv(dir.join("train.csv"), &target)?;
    test.write_csv(dir.join("test.csv"), &target)?;
    let ids = |t: &Table| t.row_ids().iter().map(|r| r.0).collect::<Vec<u64>>();
    let doc = json!({
        "seed": cfg.seed,
        "test_frac": cfg.test_frac,
        "train_rows": ids(&train),
        "test_rows": ids(&test),
    });
    write_text(&dir.join("split.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    log::info!(
        "train {} rows ({} positive), test {} rows ({} positive) in {}",
        train.n_rows(),
        train.positives(),
        test.n_rows(),
        test.positives(),
        dir.display()
    );
    Ok(())
}

pub fn synth(c: &Common, config: &Path, kind: GeneratorKind, n: usize) -> Result<()> {
    let cfg = load_config(c, config)?;
    let (table, _) = harness::load_dataset(&cfg)?;
    let target = cfg.load_schema()?.target;
    let (train, test) = harness::split_dataset(&cfg, &table)?;
    let (_, g) = harness::fit_final_generator(&cfg, &train, &test, kind)?;
    let rows = g.sample(n, derive_seed(cfg.seed, &[tag("synth"), tag(kind.name())]))?;
    let dir = cfg.out_dir.join("synth");
    write_text(&dir.join(format!("{}_generator.json", kind.name())), &serde_json::to_string(&g)?)?;
    let csv = dir.join(format!("{}_synthetic.csv", kind.name()));
    rows.write_csv(&csv, &target)?;
    log::info!(
        "{} fitted on {} positive rows; {} samples in {}",
        kind.name(),
        g.fingerprint().rows().len(),
        n,
        csv.display()
    );
    Ok(())
}

fn find_regime(cfg: &ExperimentConfig, name: &str) -> Result<RegimeSpec> {
    if name == "none" {
        return Ok(RegimeSpec::None);
    }
    match cfg.regimes.iter().find(|r| r.name() == name) {
        Some(r) => Ok(r.clone()),
        None => {
            let known: Vec<String> = cfg.regimes.iter().map(RegimeSpec::name).collect();
            Err(Error::InvalidArgument(format!("unknown regime `{name}`; the config defines {}", known.join(", "))).into())
        }
    }
}

pub fn train(c: &Common, config: &Path, regime: &str, tuned: Option<&Path>) -> Result<()> {
    let cfg = load_config(c, config)?;
    let regime = find_regime(&cfg, regime)?;
    let tuned = tuned.map(harness::load_report).transpose()?.map(|r| harness::tuned_hyperparams(&r));
    let specs = harness::model_specs(&cfg, tuned.as_ref())?;
    let (table, _) = harness::load_dataset(&cfg)?;
    let (train, test) = harness::split_dataset(&cfg, &table)?;
    let bundle = harness::train_final(&cfg, &train, &test, &regime, &specs)?;
    let path = cfg.out_dir.join(format!("models_{}.json", slug(&regime.name())));
    write_text(&path, &bundle.to_json()?)?;
    log::info!(
        "trained {} models on {} (+{} synthetic, +{} edge rows) into {}",
        bundle.models.len(),
        regime.name(),
        bundle.augmentation.n_synthetic,
        bundle.augmentation.n_edge,
        path.display()
    );
    Ok(())
}

pub fn evaluate(c: &Common, config: &Path, models: &Path, brier_multiclass: bool) -> Result<()> {
    let (cfg, bundle, test) = bundle_and_test(c, config, models)?;
    let x = bundle.transform(&test)?;
    let y = test.target();
    let regime = bundle.regime.name();
    let mut metrics = TestMetrics::default();
    let mut header = vec!["row_id".to_string(), "label".to_string()];
    let mut probas = Vec::new();
    for m in &bundle.models {
        let p = m.model.predict_proba(x.view())?;
        let mut e = score(&p, y, cfg.metrics.threshold, cfg.metrics.ece_bins)?;
        if brier_multiclass || cfg.metrics.brier_multiclass {
            e.probability.brier_two_class = Some(brier_two_class(&p, y)?);
        }
        metrics.push(&regime, &m.name, m.spec.calibrate, &e, risk_coverage(&p, y)?.auc_rc);
        header.push(m.name.clone());
        probas.push(p);
    }
    let s = slug(&regime);
    metrics.write(&cfg.out_dir.join("tables").join(format!("test_metrics_{s}.csv")))?;
    let rows: Vec<Vec<String>> = (0..test.n_rows())
        .map(|i| {
            let mut r = vec![test.row_ids()[i].0.to_string(), y[i].to_string()];
            r.extend(probas.iter().map(|p| tables::num(p[i])));
            r
        })
        .collect();
    tables::write(&cfg.out_dir.join(format!("predictions_{s}.csv")), &header, &rows)?;
    log::info!("evaluated {} models on {} test rows", bundle.models.len(), test.n_rows());
    Ok(())
}

pub fn stress(c: &Common, n: usize, spec: &Path, models: Option<&Path>) -> Result<()> {
    let schema = Schema::load(spec)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let bundle = models.map(load_bundle).transpose()?;
    let seed = c.seed.or(bundle.as_ref().map(|b| b.seed)).unwrap_or(benchmark::DEFAULT_SEED);
    let cohort = match &bundle {
        Some(b) => harness::stress_cohort(&schema.columns, &b.pipeline, n, seed)?,
        None => sample_edge_cases(&schema.columns, n, derive_seed(seed, &[tag("stress_cohort")]))?,
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cohort.write_csv(out.join("stress_cohort.csv"), &schema.target)?;
    if let Some(b) = &bundle {
        let x = b.pipeline.encode(&cohort)?;
        let regime = b.regime.name();
        let rows = b
            .models
            .iter()
            .map(|m| {
                let p = m.model.predict_proba(x.view())?;
                Ok(tables::stress_row(&regime, &m.name, n, &cohort_summary(&p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        tables::write(
            &out.join("tables").join(format!("stress_{}.csv", slug(&regime))),
            &tables::stress_header(),
            &rows,
        )?;
    }
    log::info!("{n}-row edge cohort written to {}", out.display());
    Ok(())
}

pub fn importance(c: &Common, config: &Path, models: &Path, repeats: Option<usize>) -> Result<()> {
    let (cfg, bundle, test) = bundle_and_test(c, config, models)?;
    let x = bundle.transform(&test)?;
    let repeats = repeats.unwrap_or(cfg.importance.repeats);
    let regime = bundle.regime.name();
    let results = bundle
        .models
        .iter()
        .map(|m| Ok((m.name.clone(), harness::importance_for(&bundle, m, &x, test.target(), repeats)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .flat_map(|(name, r)| tables::importance_rows(&regime, name, r))
        .collect();
    let dir = cfg.out_dir.join("tables");
    let s = slug(&regime);
    tables::write(&dir.join(format!("importance_{s}.csv")), &tables::importance_header(), &rows)?;
    let (header, rows) = tables::rank_table(&regime, &average_ranks(&results)?);
    tables::write(&dir.join(format!("ranks_{s}.csv")), &header, &rows)?;
    log::info!("importance over {repeats} repeats written to {}", dir.display());
    Ok(())
}

pub fn report(c: &Common, from: &Path) -> Result<()> {
    let report = harness::load_report(from)?;
    let out = match &c.out {
        Some(o) => o.clone(),
        None => from.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_report_outputs(&report, &out)?;
    log::info!("tables and figures regenerated in {}", out.display());
    Ok(())
}

pub fn retrain(
    c: &Common,
    config: &Path,
    from: &Path,
    keep: Vec<String>,
    top: Option<usize>,
    rank_regime: &str,
) -> Result<()> {
    let cfg = load_config(c, config)?;
    let original = harness::load_report(from)?;
    let keep = match top {
        Some(k) => {
            let Some(table) = original.regime(rank_regime).and_then(|r| r.rank_table.as_ref()) else {
                bail!(Error::InvalidArgument(format!("report has no rank table for regime `{rank_regime}`")));
            };
            table.top(k)
        }
        None => keep,
    };
    let out = harness::retrain_on_selected_features(&cfg, &original, &keep)?;
    let dir = cfg.out_dir.join("retrain");
    write_text(&dir.join("retrain.json"), &(serde_json::to_string_pretty(&out)? + "\n"))?;
    tables::write_deltas(&dir.join("tables").join("retrain_deltas.csv"), &out.deltas)?;
    write_report_outputs(&out.report, &dir)?;
    log::info!("kept {:?}; removed {} columns", out.keep, out.removed.len());
    Ok(())
}

pub fn bench_data(c: &Common) -> Result<()> {
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    let seed = c.seed.unwrap_or(benchmark::DEFAULT_SEED);
    benchmark::write_bundle(&out, seed)?;
    log::info!("benchmark (seed {seed}) written to {}", out.display());
    Ok(())
}
