//! CSV tables at four decimals.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use tabrisk::eval::{CohortSummary, Evaluation};
use tabrisk::harness::{ExperimentReport, MetricDelta, MetricSet};
use tabrisk::importance::{ImportanceResult, RankTable};

pub fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// One test-split row per (regime, model).
#[derive(Default)]
pub struct TestMetrics {
    rows: Vec<(String, String, bool, Evaluation, f64)>,
}

impl TestMetrics {
    pub fn push(&mut self, regime: &str, model: &str, calibrated: bool, e: &Evaluation, auc_rc: f64) {
        self.rows.push((regime.into(), model.into(), calibrated, e.clone(), auc_rc));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let two_class = self.rows.iter().any(|r| r.3.probability.brier_two_class.is_some());
        let mut header = strings(&["regime", "model", "calibrated", "tp", "fp", "tn", "fn"]);
        header.extend(MetricSet::NAMES.iter().map(|s| s.to_string()));
        header.push("auc_rc".into());
        if two_class {
            header.push("brier_two_class".into());
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(regime, model, cal, e, auc_rc)| {
                let c = &e.confusion;
                let m = MetricSet::from_evaluation(e);
                let mut r = vec![
                    regime.clone(),
                    model.clone(),
                    cal.to_string(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.tn.to_string(),
                    c.fn_.to_string(),
                ];
                r.extend(MetricSet::NAMES.iter().map(|k| opt(m.get(k))));
                r.push(num(*auc_rc));
                if two_class {
                    r.push(opt(e.probability.brier_two_class));
                }
                r
            })
            .collect();
        write(path, &header, &rows)
    }
}

pub fn stress_header() -> Vec<String> {
    strings(&["regime", "model", "n", "q0", "q50", "q99", "mean", "std"])
}

pub fn stress_row(regime: &str, model: &str, n: usize, s: &CohortSummary) -> Vec<String> {
    vec![
        regime.into(),
        model.into(),
        n.to_string(),
        num(s.q0),
        num(s.q50),
        num(s.q99),
        num(s.mean),
        num(s.std),
    ]
}

pub fn importance_header() -> Vec<String> {
    strings(&["regime", "model", "feature", "mean_delta_auc", "std", "repeats", "baseline_auc"])
}

pub fn importance_rows(regime: &str, model: &str, imp: &ImportanceResult) -> Vec<Vec<String>> {
    imp.features
        .iter()
        .map(|f| {
            vec![
                regime.into(),
                model.into(),
                f.feature.clone(),
                num(f.mean),
                num(f.std),
                f.repeats.to_string(),
                num(imp.baseline_auc),
            ]
        })
        .collect()
}

/// Rank rows ordered from most to least important.
pub fn rank_table(regime: &str, t: &RankTable) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = strings(&["regime", "feature", "mean_rank"]);
    header.extend(t.per_model.iter().map(|m| m.model.clone()));
    let mut order: Vec<usize> = (0..t.features.len()).collect();
    order.sort_by(|&a, &b| t.mean_rank[a].total_cmp(&t.mean_rank[b]));
    let rows = order
        .into_iter()
        .map(|i| {
            let mut r = vec![regime.to_string(), t.features[i].clone(), num(t.mean_rank[i])];
            r.extend(t.per_model.iter().map(|m| num(m.ranks[i])));
            r
        })
        .collect();
    (header, rows)
}

pub fn write_deltas(path: &Path, deltas: &[MetricDelta]) -> Result<()> {
    let header = strings(&["regime", "model", "metric", "original", "retrained", "delta"]);
    let rows: Vec<Vec<String>> = deltas
        .iter()
        .map(|d| {
            vec![
                d.regime.clone(),
                d.model.clone(),
                d.metric.clone(),
                opt(d.original),
                opt(d.retrained),
                opt(d.delta),
            ]
        })
        .collect();
    write(path, &header, &rows)
}

/// Every table a report supports, under `dir`.
pub fn write_report_tables(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut test = TestMetrics::default();
    let mut cv_rows = Vec::new();
    let mut stress_rows = Vec::new();
    let mut imp_rows = Vec::new();
    let mut rank_header = None;
    let mut rank_rows = Vec::new();
    for r in &report.regimes {
        for m in &r.models {
            test.push(&r.regime, &m.model, m.calibrated, &m.test, m.rc.auc_rc);
            if let Some(cv) = &m.cv {
                let mut row = vec![
                    r.regime.clone(),
                    m.model.clone(),
                    cv.folds.len().to_string(),
                    cv.excluded.len().to_string(),
                ];
                for k in MetricSet::NAMES {
                    row.push(opt(cv.mean.get(k)));
                    row.push(opt(cv.std.get(k)));
                }
                cv_rows.push(row);
            }
            if let Some(s) = &m.stress {
                stress_rows.push(stress_row(&r.regime, &m.model, s.proba.len(), &s.summary));
            }
            if let Some(imp) = &m.importance {
                imp_rows.extend(importance_rows(&r.regime, &m.model, imp));
            }
        }
        if let Some(t) = &r.rank_table {
            let (h, rows) = rank_table(&r.regime, t);
            rank_header.get_or_insert(h);
            rank_rows.extend(rows);
        }
    }
    test.write(&dir.join("test_metrics.csv"))?;
    if !cv_rows.is_empty() {
        let mut header = strings(&["regime", "model", "folds", "excluded"]);
        for k in MetricSet::NAMES {
            header.push(format!("{k}_mean"));
            header.push(format!("{k}_std"));
        }
        write(&dir.join("cv_metrics.csv"), &header, &cv_rows)?;
    }
    if !stress_rows.is_empty() {
        write(&dir.join("stress.csv"), &stress_header(), &stress_rows)?;
    }
    if !imp_rows.is_empty() {
        write(&dir.join("importance.csv"), &importance_header(), &imp_rows)?;
    }
    if let Some(h) = rank_header {
        write(&dir.join("ranks.csv"), &h, &rank_rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimals_without_negative_zero() {
        assert_eq!(num(0.123456), "0.1235");
        assert_eq!(num(-0.00001), "0.0000");
        assert_eq!(num(1.0), "1.0000");
        assert_eq!(opt(None), "");
    }
}
