//! Acceptance criteria, one PASS/FAIL line each. Runs as its own binary so
//! the slow end-to-end checks report together.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use tabrisk::benchmark;
use tabrisk::calibration::calibrate_cv_with;
use tabrisk::config::ExperimentConfig;
use tabrisk::data::ColumnSchema;
use tabrisk::eval::{
    auc_roc, avg_confidence, avg_entropy, brier, calibration_bins, classification_metrics, confusion_at_threshold, ece,
    risk_coverage,
};
use tabrisk::harness::{self, ExperimentReport, RegimeSpec};
use tabrisk::importance::permutation_importance;
use tabrisk::models::{Kan, KanParams, Logistic, LogisticParams, ProbabilisticClassifier};
use tabrisk::preprocess::FeatureGroup;
use tabrisk::rng;
use tabrisk::synthgen::{Arf, ArfParams, Copula, Tvae, TvaeParams};
use tempfile::TempDir;

const MODELS: [&str; 4] = ["logistic", "random_forest", "gbdt", "kan"];

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bundled_config() -> PathBuf {
    data_dir().join("benchmark_config.json")
}

fn tabrisk(args: &[&str]) -> Result<Duration> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_tabrisk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .context("running tabrisk")?;
    ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(start.elapsed())
}

/// Bundled data next to a variant of the bundled config.
fn variant(dir: &Path, edit: impl FnOnce(&mut Value)) -> Result<PathBuf> {
    for f in ["benchmark.csv", "benchmark_schema.json"] {
        fs::copy(data_dir().join(f), dir.join(f))?;
    }
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(bundled_config())?)?;
    edit(&mut cfg);
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string())?;
    Ok(path)
}

fn run_variant(edit: impl FnOnce(&mut Value)) -> Result<(ExperimentReport, Duration)> {
    let dir = TempDir::new()?;
    let cfg = variant(dir.path(), edit)?;
    let out = dir.path().join("out");
    let t = tabrisk(&["run", "--config", s(&cfg), "--out", s(&out)])?;
    Ok((harness::load_report(out.join("report.json"))?, t))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn model<'a>(r: &'a ExperimentReport, regime: &str, name: &str) -> Result<&'a harness::ModelReport> {
    r.regime(regime)
        .and_then(|g| g.model(name))
        .with_context(|| format!("no {regime}/{name} in report"))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn brute_auc(p: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                if p[i] > p[j] {
                    num += 1.0;
                } else if p[i] == p[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn criterion_1() -> Result<String> {
    let start = Instant::now();
    let mut r = rng::rng(101);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 200 {
        let n = r.random_range(2..=50);
        // Coarse levels force ties.
        let levels = r.random_range(2..=12);
        let p: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        worst = worst.max((auc_roc(&p, &y)? - brute_auc(&p, &y)).abs());
        instances += 1;
    }
    ensure!(worst <= 1e-12, "AUC differs from pairwise count by {worst:e}");
    let bins = calibration_bins(&[0.6, 0.7, 0.9, 0.95], &[true, false, true, true], 2, 0.0, 1.0)?;
    ensure!(close(bins.ece(), 0.0375, 1e-15), "ECE fixture {}", bins.ece());
    ensure!(ece(&[1.0, 0.0, 1.0], &[1, 0, 1], 10)? == 0.0, "ECE of a perfect predictor");
    let b = brier(&[0.8], &[1])?;
    ensure!(close(b, 0.04, 1e-15), "Brier fixture {b}");
    let h = avg_entropy(&[0.5; 3]);
    ensure!(close(h, 2f64.ln(), 1e-15), "entropy fixture {h}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("200 instances, max AUC error {worst:e}, fixtures exact, {elapsed:.2?}"))
}

fn criterion_2() -> Result<String> {
    let mut y = vec![0u8; 378];
    y.extend([1u8; 31]);
    let p = vec![0.08; 409];
    let m = classification_metrics(&confusion_at_threshold(&p, &y, 0.5)?);
    let checks = [
        ("accuracy", m.accuracy, 0.9242),
        ("precision", m.precision, 0.0),
        ("recall", m.recall, 0.0),
        ("f1", m.f1, 0.0),
        ("confidence", avg_confidence(&p), 0.92),
        ("entropy", avg_entropy(&p), 0.279),
        ("brier", brier(&p, &y)?, 0.071),
    ];
    for (name, got, want) in checks {
        ensure!(close(got, want, 0.01), "{name} {got:.4} vs {want}");
    }
    Ok(checks.iter().map(|(n, g, _)| format!("{n} {g:.4}")).collect::<Vec<_>>().join(", "))
}

fn none_only(cfg: &mut Value) {
    cfg["cv"] = json!(false);
    cfg["regimes"] = json!([{"kind": "none"}]);
    cfg["importance"]["enabled"] = json!(false);
    cfg["stress"]["n"] = json!(0);
}

fn criterion_3() -> Result<String> {
    let (r, t) = run_variant(none_only)?;
    let mut notes = Vec::new();
    for name in ["logistic", "random_forest"] {
        let m = model(&r, "none", name)?;
        let (recall, auc) = (m.test.classification.recall, m.test.auc_roc.unwrap_or(0.0));
        ensure!(recall < 0.1 && auc > 0.7, "{name}: recall {recall:.3}, AUC {auc:.3}");
        notes.push(format!("{name} recall {recall:.3} AUC {auc:.3}"));
    }
    ensure!(t < Duration::from_secs(120), "took {t:?}");
    Ok(format!("{}, {t:.1?}", notes.join("; ")))
}

fn criterion_4() -> Result<String> {
    let (r, t) = run_variant(|cfg| {
        none_only(cfg);
        cfg["regimes"] = json!([{"kind": "none"}, {"kind": "generator", "generator": "arf", "n": 500}]);
    })?;
    let mut improved = 0;
    let mut notes = Vec::new();
    for name in MODELS {
        let (base, aug) = (model(&r, "none", name)?, model(&r, "arf_500", name)?);
        let gain = aug.test.classification.recall - base.test.classification.recall;
        let drop = base.test.auc_roc.unwrap_or(0.0) - aug.test.auc_roc.unwrap_or(0.0);
        if gain >= 0.10 && drop <= 0.05 {
            improved += 1;
        }
        notes.push(format!("{name} recall {gain:+.3} AUC {:+.3}", -drop));
    }
    ensure!(improved >= 3, "{improved}/4 models improved: {}", notes.join("; "));
    ensure!(t < Duration::from_secs(300), "took {t:?}");
    Ok(format!("{improved}/4 improved ({}), {t:.1?}", notes.join("; ")))
}

fn stress_mean(r: &ExperimentReport, regime: &str, name: &str) -> Result<f64> {
    let m = model(r, regime, name)?;
    let s = m.stress.as_ref().with_context(|| format!("{regime}/{name} has no stress result"))?;
    ensure!(s.proba.len() == 200, "cohort of {} rows", s.proba.len());
    Ok(s.summary.mean)
}

fn criterion_5(r: &ExperimentReport) -> Result<String> {
    let mut notes = Vec::new();
    for name in MODELS {
        let mean = stress_mean(r, "edge_500", name)?;
        ensure!(mean >= 0.9, "{name} edge_500 mean {mean:.3}");
        notes.push(format!("{name} {mean:.3}"));
    }
    let (plain, edge) = (stress_mean(r, "none", "logistic")?, stress_mean(r, "edge_500", "logistic")?);
    ensure!(edge - plain >= 0.2, "logistic none {plain:.3} vs edge_500 {edge:.3}");
    Ok(format!("edge_500 means {}; logistic none {plain:.3}", notes.join(", ")))
}

/// Reads the true logit from column 0 and triples it.
struct Overconfident;

impl ProbabilisticClassifier for Overconfident {
    fn n_features(&self) -> usize {
        1
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> tabrisk::Result<Vec<f64>> {
        Ok(x.column(0).iter().map(|&z| sigmoid(3.0 * z)).collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn criterion_6() -> Result<String> {
    let n = 5000;
    let mut r = rng::rng(61);
    let z: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
    let y: Vec<u8> = z.iter().map(|&v| (r.random::<f64>() < sigmoid(v)) as u8).collect();
    let x = Array2::from_shape_vec((n, 1), z)?;
    let raw = Overconfident.predict_proba(x.view())?;
    let cal = calibrate_cv_with(|_, _, _| Ok(Overconfident), x.view(), &y, 5, 62)?;
    let p = cal.predict_proba(x.view())?;
    let (before, after) = (ece(&raw, &y, 10)?, ece(&p, &y, 10)?);
    ensure!(after <= 0.5 * before, "ECE {before:.4} -> {after:.4}");
    let mut worst: f64 = 0.0;
    for m in cal.members() {
        let member = m.model.predict_proba(x.view())?;
        let calibrated: Vec<f64> = member.iter().map(|&v| m.calibrator.calibrate(v)).collect();
        worst = worst.max((auc_roc(&member, &y)? - auc_roc(&calibrated, &y)?).abs());
    }
    ensure!(worst <= 1e-12, "member AUC moved by {worst:e}");
    Ok(format!("ECE {before:.4} -> {after:.4}, member AUC change {worst:e}"))
}

/// Risk of the `k` most confident samples, found by ranking every sample
/// against all others.
fn brute_rc(p: &[f64], y: &[u8]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = p.len();
    let conf: Vec<f64> = p.iter().map(|&v| v.max(1.0 - v)).collect();
    let rank: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| conf[j] > conf[i] || (conf[j] == conf[i] && j < i)).count())
        .collect();
    let wrong: Vec<bool> = (0..n).map(|i| (p[i] >= 0.5) != (y[i] == 1)).collect();
    let mut coverage = Vec::new();
    let mut risk = Vec::new();
    for k in 1..=n {
        let errors = (0..n).filter(|&i| rank[i] < k && wrong[i]).count();
        coverage.push(k as f64 / n as f64);
        risk.push(errors as f64 / k as f64);
    }
    let mut area = 0.0;
    for k in 1..n {
        area += 0.5 * (coverage[k] - coverage[k - 1]) * (risk[k] + risk[k - 1]);
    }
    (coverage, risk, area)
}

fn criterion_7(r: &ExperimentReport) -> Result<String> {
    let rf = model(r, "none", "random_forest")?;
    ensure!(rf.calibrated, "random forest is not calibrated");
    ensure!(rf.rc.auc_rc < 0.1, "random forest AUC-RC {:.4}", rf.rc.auc_rc);
    let mut g = rng::rng(71);
    for case in 0..100 {
        let n = g.random_range(1..=100);
        let levels = g.random_range(2..=20);
        let p: Vec<f64> = (0..n).map(|_| g.random_range(0..=levels) as f64 / levels as f64).collect();
        let y: Vec<u8> = (0..n).map(|_| g.random_range(0..2u8)).collect();
        let curve = risk_coverage(&p, &y)?;
        let (coverage, risk, area) = brute_rc(&p, &y);
        if curve.coverage != coverage || curve.risk != risk || curve.auc_rc != area {
            bail!("case {case} (n = {n}) differs from prefix enumeration");
        }
    }
    Ok(format!("random forest AUC-RC {:.4}; 100 fixtures match exactly", rf.rc.auc_rc))
}

fn criterion_8() -> Result<String> {
    let base = ExperimentConfig::load(bundled_config())?;
    let (table, _) = harness::load_dataset(&base)?;
    let mut planted: Vec<String> = benchmark::PLANTED.iter().map(|s| s.to_string()).collect();
    planted.sort();
    let mut hits = Vec::new();
    for seed in 2044..2054 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.cv = false;
        cfg.regimes = vec![RegimeSpec::None];
        cfg.stress.n = 0;
        let r = harness::run_on_table(&cfg, &table)?;
        let mut top = r
            .regime("none")
            .and_then(|g| g.rank_table.as_ref())
            .context("no rank table")?
            .top(4);
        top.sort();
        if top == planted {
            hits.push(seed);
        }
    }
    ensure!(hits.len() >= 9, "planted top 4 at only {} of 10 seeds ({hits:?})", hits.len());

    let mut g = rng::rng(81);
    let x = Array2::from_shape_fn((300, 3), |(_, j)| if j == 2 { 4.0 } else { g.random::<f64>() });
    let y: Vec<u8> = x.rows().into_iter().map(|row| (row[0] + 0.3 * row[1] > 0.6) as u8).collect();
    let m = Logistic::fit(x.view(), &y, &LogisticParams::default())?;
    let groups: Vec<FeatureGroup> = (0..3)
        .map(|j| FeatureGroup {
            source: format!("f{j}"),
            slots: vec![j],
        })
        .collect();
    let imp = permutation_importance(&m, x.view(), &y, &groups, 10, 82)?;
    ensure!(imp.features[2].deltas.iter().all(|&d| d == 0.0), "constant feature deltas {:?}", imp.features[2].deltas);
    Ok(format!("planted top 4 at {}/10 seeds; constant feature exactly 0", hits.len()))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn normals(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, r)).collect()
}

fn relative_error(grad: &[f64], params: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.to_vec();
        p[i] += h;
        let up = loss(&p);
        p[i] -= 2.0 * h;
        let down = loss(&p);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-6));
    }
    worst
}

fn criterion_9() -> Result<String> {
    let mut r = rng::rng(91);
    let a = normals(10_000, &mut r);
    let b = normals(10_000, &mut r);
    let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.8 * u + 0.6 * v).collect();
    let schema = [ColumnSchema::numeric("x"), ColumnSchema::numeric("y")];
    let copula = Copula::fit(&schema, &[a, y])?;
    let s = copula.sample(10_000, &mut rng::rng(92));
    let rho = pearson(&s[0], &s[1]);
    ensure!(close(rho, 0.8, 0.05), "copula rho {rho:.3}");

    let x = normals(500, &mut r);
    let noise = normals(500, &mut r);
    let y: Vec<f64> = x.iter().zip(&noise).map(|(u, e)| u + 0.3 * e).collect();
    let cols = vec![x, y];
    let arf = Arf::fit(&schema, &cols, &ArfParams::default(), 93)?;
    let s = arf.sample(2000, &mut rng::rng(94));
    let arf_rho = pearson(&s[0], &s[1]);
    let mut shuffled = cols.clone();
    let mut pr = rng::rng(95);
    for c in &mut shuffled {
        rand::seq::SliceRandom::shuffle(c.as_mut_slice(), &mut pr);
    }
    let naive_rho = pearson(&shuffled[0], &shuffled[1]);
    ensure!(arf_rho > 0.5 && naive_rho.abs() < 0.1, "ARF {arf_rho:.3}, naive {naive_rho:.3}");

    let mut r = rng::rng(96);
    let v: Vec<f64> = (0..6).map(|_| 50.0 + 10.0 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
    let c: Vec<f64> = v.iter().map(|&t| f64::from(u8::from(t > 50.0) + u8::from(t > 60.0))).collect();
    let schema = [ColumnSchema::numeric("v"), ColumnSchema::categorical("c", ["lo", "mid", "hi"])];
    let cols = vec![v, c];
    let params = TvaeParams {
        latent_dim: 2,
        hidden_width: 5,
        ..Default::default()
    };
    let mut vae = Tvae::init(&schema, &cols, &params, 97)?;
    let xe = vae.encode_rows(&cols);
    let eps = Array2::from_shape_fn((6, 2), |_| Distribution::<f64>::sample(&StandardNormal, &mut r));
    let (_, grad) = vae.loss_and_gradient(&xe, &eps);
    let base = vae.params();
    let tvae_err = relative_error(&grad, &base, |p| {
        vae.set_params(p);
        vae.loss(&xe, &eps)
    });
    ensure!(tvae_err < 1e-3, "TVAE gradient error {tvae_err:e}");

    let x = Array2::from_shape_fn((5, 3), |_| Distribution::<f64>::sample(&StandardNormal, &mut r));
    let labels = [1u8, 0, 0, 1, 0];
    let mut kan = Kan::init(
        x.view(),
        &labels,
        &KanParams {
            hidden_width: 4,
            ..Default::default()
        },
        98,
    )?;
    let (_, grad) = kan.loss_and_gradient(x.view(), &labels, 2.5)?;
    let base = kan.params();
    let kan_err = relative_error(&grad, &base, |p| {
        kan.set_params(p);
        kan.loss(x.view(), &labels, 2.5).unwrap()
    });
    ensure!(kan_err < 1e-4, "KAN gradient error {kan_err:e}");
    Ok(format!(
        "copula rho {rho:.3}; ARF {arf_rho:.3} vs naive {naive_rho:.3}; gradient error TVAE {tvae_err:.1e}, KAN {kan_err:.1e}"
    ))
}

/// Two full runs of the bundled config; returns the first report.
fn criterion_10() -> (Result<String>, Option<ExperimentReport>) {
    let run = || -> Result<(TempDir, String, Duration)> {
        let dir = TempDir::new()?;
        let t = tabrisk(&["run", "--config", s(&bundled_config()), "--out", s(dir.path())])?;
        let text = fs::read_to_string(dir.path().join("report.json"))?;
        Ok((dir, text, t))
    };
    let outcome = (|| {
        let (_, first, t1) = run()?;
        let (_, second, t2) = run()?;
        let report = ExperimentReport::from_json(&first)?;
        Ok((first == second, report, first.len(), t1, t2))
    })();
    match outcome {
        Ok((same, report, len, t1, t2)) => {
            let verdict = if same {
                Ok(format!("report.json identical ({len} bytes), runs {t1:.1?} and {t2:.1?}"))
            } else {
                Err(anyhow::anyhow!("report.json differs between runs"))
            };
            (verdict, Some(report))
        }
        Err(e) => (Err(e), None),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, Result<String>)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
    ];
    let (determinism, full) = criterion_10();
    let missing = || Err(anyhow::anyhow!("full run unavailable"));
    results.push((5, full.as_ref().map_or_else(missing, criterion_5)));
    results.push((6, criterion_6()));
    results.push((7, full.as_ref().map_or_else(missing, criterion_7)));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, determinism));
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n}: PASS {detail}"),
            Err(e) => {
                failed += 1;
                println!("criterion {n}: FAIL {e:#}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
