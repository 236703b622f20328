//! Train-only preprocessing: sparse-column removal, imputation, one-hot
//! encoding, standardization and ANOVA-F feature selection.
//!
//! Everything here is fitted on a training table and then applied unchanged
//! to validation and test tables.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, ColumnSchema, Table};
use crate::error::{Error, Result};
use crate::linalg;

/// Maximum number of missing cells a column may have before it is dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseThreshold {
    Count(usize),
    Fraction(f64),
}

impl SparseThreshold {
    fn limit(self, n_rows: usize) -> usize {
        match self {
            SparseThreshold::Count(c) => c,
            SparseThreshold::Fraction(f) => (f * n_rows as f64).floor() as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_missing: SparseThreshold,
    pub impute_rounds: usize,
    pub impute_tol: f64,
    pub ridge_lambda: f64,
    /// Number of encoded features kept by ANOVA-F selection; `None` keeps all.
    pub select_k: Option<usize>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_missing: SparseThreshold::Count(500),
            impute_rounds: 10,
            impute_tol: 1e-3,
            ridge_lambda: 1e-3,
            select_k: None,
        }
    }
}

/// Drops every column with more than the allowed number of missing cells.
/// Returns the reduced table and the names of the dropped columns.
pub fn drop_sparse_columns(t: &Table, threshold: SparseThreshold) -> Result<(Table, Vec<String>)> {
    let limit = threshold.limit(t.n_rows());
    let (keep, drop): (Vec<&Column>, Vec<&Column>) =
        t.columns().iter().partition(|c| c.missing_count() <= limit);
    if keep.is_empty() {
        return Err(Error::AllColumnsRemoved);
    }
    let keep: Vec<String> = keep.iter().map(|c| c.name().to_string()).collect();
    let dropped = drop.iter().map(|c| c.name().to_string()).collect();
    Ok((t.select_columns(&keep)?, dropped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ColumnRegression {
    column: usize,
    predictors: Vec<usize>,
    intercept: f64,
    coef: Vec<f64>,
}

/// Mode imputation for categoricals and chained ridge regressions for
/// numerics. The fitted sequence of regressions is replayed on new tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    columns: Vec<ColumnSchema>,
    modes: Vec<Option<usize>>,
    means: Vec<Option<f64>>,
    rounds: Vec<Vec<ColumnRegression>>,
    max_change: Vec<f64>,
}

impl Imputer {
    pub fn fit(t: &Table, rounds: usize, tol: f64, lambda: f64) -> Result<(Imputer, Table)> {
        let mut modes = Vec::with_capacity(t.n_cols());
        let mut means = Vec::with_capacity(t.n_cols());
        for c in t.columns() {
            let observed: Vec<f64> = (0..c.len()).filter_map(|i| c.get(i)).collect();
            if observed.is_empty() {
                return Err(Error::ColumnEntirelyMissing(c.name().to_string()));
            }
            match c.schema.kind {
                ColumnKind::Categorical => {
                    let mut counts = vec![0usize; c.schema.categories.len()];
                    for v in &observed {
                        counts[*v as usize] += 1;
                    }
                    // first category wins ties
                    let mode = counts
                        .iter()
                        .enumerate()
                        .fold((0, 0), |best, (k, &n)| if n > best.1 { (k, n) } else { best })
                        .0;
                    modes.push(Some(mode));
                    means.push(None);
                }
                ColumnKind::Numeric => {
                    modes.push(None);
                    means.push(Some(observed.iter().sum::<f64>() / observed.len() as f64));
                }
            }
        }
        let mut imputer = Imputer {
            columns: t.schema(),
            modes,
            means,
            rounds: Vec::new(),
            max_change: Vec::new(),
        };
        let mut work = imputer.initial_fill(t);
        let numeric: Vec<usize> = (0..t.n_cols())
            .filter(|&j| t.columns()[j].schema.kind == ColumnKind::Numeric)
            .collect();
        let any_missing = numeric.iter().any(|&j| t.columns()[j].missing_count() > 0);
        if numeric.len() >= 2 && any_missing {
            for _ in 0..rounds {
                let mut fitted = Vec::new();
                let mut change: f64 = 0.0;
                for &j in &numeric {
                    let predictors: Vec<usize> = numeric.iter().copied().filter(|&k| k != j).collect();
                    let col = &t.columns()[j];
                    let rows: Vec<usize> = (0..t.n_rows()).filter(|&i| !col.missing[i]).collect();
                    let x: Vec<Vec<f64>> = rows
                        .iter()
                        .map(|&i| predictors.iter().map(|&k| work[k][i]).collect())
                        .collect();
                    let y: Vec<f64> = rows.iter().map(|&i| work[j][i]).collect();
                    let (intercept, coef) = linalg::ridge(&x, &y, lambda);
                    let reg = ColumnRegression {
                        column: j,
                        predictors,
                        intercept,
                        coef,
                    };
                    for i in 0..t.n_rows() {
                        if col.missing[i] {
                            let v = reg.predict(&work, i);
                            change = change.max((v - work[j][i]).abs());
                            work[j][i] = v;
                        }
                    }
                    fitted.push(reg);
                }
                imputer.rounds.push(fitted);
                imputer.max_change.push(change);
                if change < tol {
                    break;
                }
            }
        }
        let table = imputer.finish(t, work)?;
        Ok((imputer, table))
    }

    fn initial_fill(&self, t: &Table) -> Vec<Vec<f64>> {
        t.columns()
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let fill = self.modes[j].map(|m| m as f64).or(self.means[j]).unwrap_or(0.0);
                c.values
                    .iter()
                    .zip(&c.missing)
                    .map(|(&v, &m)| if m { fill } else { v })
                    .collect()
            })
            .collect()
    }

    fn finish(&self, t: &Table, work: Vec<Vec<f64>>) -> Result<Table> {
        let columns = t
            .columns()
            .iter()
            .zip(work)
            .map(|(c, values)| Column::dense(c.schema.clone(), values))
            .collect();
        t.with_columns(columns)
    }

    /// Applies the fitted imputation to a table with the same columns.
    pub fn apply(&self, t: &Table) -> Result<Table> {
        if t.schema() != self.columns {
            return Err(Error::Schema("imputer applied to a table with different columns".into()));
        }
        let mut work = self.initial_fill(t);
        for round in &self.rounds {
            for reg in round {
                let col = &t.columns()[reg.column];
                for i in 0..t.n_rows() {
                    if col.missing[i] {
                        work[reg.column][i] = reg.predict(&work, i);
                    }
                }
            }
        }
        self.finish(t, work)
    }

    /// Largest absolute change of an imputed cell in each executed round.
    pub fn max_change_history(&self) -> &[f64] {
        &self.max_change
    }
}

impl ColumnRegression {
    fn predict(&self, work: &[Vec<f64>], row: usize) -> f64 {
        self.intercept
            + self
                .predictors
                .iter()
                .zip(&self.coef)
                .map(|(&k, c)| c * work[k][row])
                .sum::<f64>()
    }
}

/// Fits and applies imputation in one step.
pub fn impute(t: &Table, rounds: usize, tol: f64) -> Result<Table> {
    Imputer::fit(t, rounds, tol, PreprocessConfig::default().ridge_lambda).map(|(_, t)| t)
}

/// Encoded columns that came from one source column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub source: String,
    pub slots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub matrix: Array2<f64>,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
}

/// Layout of the one-hot expansion: every declared category gets a slot,
/// numerics pass through, source column order is kept.
pub fn encoded_layout(columns: &[ColumnSchema]) -> (Vec<String>, Vec<FeatureGroup>) {
    let mut names = Vec::new();
    let mut groups = Vec::new();
    for c in columns {
        let start = names.len();
        match c.kind {
            ColumnKind::Numeric => names.push(c.name.clone()),
            ColumnKind::Categorical => {
                names.extend(c.categories.iter().map(|k| format!("{}={k}", c.name)));
            }
        }
        groups.push(FeatureGroup {
            source: c.name.clone(),
            slots: (start..names.len()).collect(),
        });
    }
    (names, groups)
}

pub fn one_hot_encode(t: &Table) -> Result<Encoded> {
    let (names, groups) = encoded_layout(&t.schema());
    let mut m = Array2::zeros((t.n_rows(), names.len()));
    for (c, g) in t.columns().iter().zip(&groups) {
        for i in 0..t.n_rows() {
            let v = c.get(i).ok_or_else(|| Error::MissingCell {
                column: c.name().to_string(),
                row: i,
            })?;
            match c.schema.kind {
                ColumnKind::Numeric => m[[i, g.slots[0]]] = v,
                ColumnKind::Categorical => m[[i, g.slots[v as usize]]] = 1.0,
            }
        }
    }
    Ok(Encoded {
        matrix: m,
        names,
        groups,
    })
}

/// Per-feature standardization with population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Scaler {
    pub fn fit(x: ArrayView2<f64>) -> Result<Scaler> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit a scaler on zero rows".into()));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        let mut zero_variance = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            let flat = !(s > 1e-12 * m.abs().max(1.0));
            mean.push(m);
            std.push(if flat { 1.0 } else { s });
            zero_variance.push(flat);
        }
        Ok(Scaler {
            mean,
            std,
            zero_variance,
        })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }
}

pub fn standardize(fit: ArrayView2<f64>) -> Result<Scaler> {
    Scaler::fit(fit)
}

/// Two-group one-way ANOVA for one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaScore {
    pub feature: usize,
    /// `MS_B / MS_W`; infinite when the within-group mean square vanishes.
    pub f: f64,
    pub ms_between: f64,
    pub ms_within: f64,
    pub degenerate: bool,
}

pub fn anova_f_scores(x: ArrayView2<f64>, labels: &[u8]) -> Result<Vec<AnovaScore>> {
    let n = labels.len();
    if x.nrows() != n {
        return Err(Error::InvalidArgument("label count differs from row count".into()));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass("ANOVA needs both groups".into()));
    }
    let k = 2.0;
    Ok(x.columns()
        .into_iter()
        .enumerate()
        .map(|(feature, col)| {
            let mut sums = [0.0; 2];
            for (v, &y) in col.iter().zip(labels) {
                sums[y as usize] += v;
            }
            let means = [sums[0] / n0 as f64, sums[1] / n1 as f64];
            let grand = (sums[0] + sums[1]) / n as f64;
            let ss_between =
                n0 as f64 * (means[0] - grand).powi(2) + n1 as f64 * (means[1] - grand).powi(2);
            let ss_within: f64 = col
                .iter()
                .zip(labels)
                .map(|(v, &y)| (v - means[y as usize]).powi(2))
                .sum();
            let ms_between = ss_between / (k - 1.0);
            let ms_within = if n > 2 { ss_within / (n as f64 - k) } else { 0.0 };
            let scale = (ms_between + ss_within).max(1e-300);
            let degenerate = ms_within <= 1e-14 * scale;
            let f = if degenerate {
                if ms_between > 1e-14 * scale {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                ms_between / ms_within
            };
            AnovaScore {
                feature,
                f,
                ms_between,
                ms_within,
                degenerate,
            }
        })
        .collect())
}

/// Feature indices of the `k` largest F values, largest first; ties go to
/// the lower index.
pub fn select_top_k(scores: &[AnovaScore], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            scores.len()
        )));
    }
    let mut order: Vec<&AnovaScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.f.partial_cmp(&a.f)
            .unwrap_or(Ordering::Equal)
            .then(a.feature.cmp(&b.feature))
    });
    Ok(order.iter().take(k).map(|s| s.feature).collect())
}

/// Preprocessing fitted on one training table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub kept_columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub imputer: Imputer,
    pub scaler: Scaler,
    pub anova: Vec<AnovaScore>,
    /// Selected encoded-feature indices in ascending order.
    pub selected: Vec<usize>,
    encoded_names: Vec<String>,
    encoded_groups: Vec<FeatureGroup>,
}

impl FittedPipeline {
    pub fn fit(train: &Table, cfg: &PreprocessConfig) -> Result<FittedPipeline> {
        let (kept, dropped) = drop_sparse_columns(train, cfg.max_missing)?;
        let (imputer, imputed) = Imputer::fit(&kept, cfg.impute_rounds, cfg.impute_tol, cfg.ridge_lambda)?;
        let enc = one_hot_encode(&imputed)?;
        let scaler = Scaler::fit(enc.matrix.view())?;
        let scaled = scaler.apply(enc.matrix.view())?;
        let anova = anova_f_scores(scaled.view(), imputed.target())?;
        let mut selected = match cfg.select_k {
            Some(k) => select_top_k(&anova, k)?,
            None => (0..enc.names.len()).collect(),
        };
        selected.sort_unstable();
        Ok(FittedPipeline {
            kept_columns: kept.column_names(),
            dropped_columns: dropped,
            imputer,
            scaler,
            anova,
            selected,
            encoded_names: enc.names,
            encoded_groups: enc.groups,
        })
    }

    /// Keeps the fitted columns and fills every missing cell.
    pub fn impute(&self, t: &Table) -> Result<Table> {
        self.imputer.apply(&t.select_columns(&self.kept_columns)?)
    }

    /// Encodes, scales and selects an already-imputed table.
    pub fn encode(&self, imputed: &Table) -> Result<Array2<f64>> {
        let enc = one_hot_encode(&imputed.select_columns(&self.kept_columns)?)?;
        let scaled = self.scaler.apply(enc.matrix.view())?;
        Ok(scaled.select(ndarray::Axis(1), &self.selected))
    }

    pub fn transform(&self, t: &Table) -> Result<Array2<f64>> {
        self.encode(&self.impute(t)?)
    }

    pub fn n_features(&self) -> usize {
        self.selected.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.selected.iter().map(|&i| self.encoded_names[i].clone()).collect()
    }

    /// Source-column groups in the selected feature space; columns whose
    /// slots were all deselected are omitted.
    pub fn groups(&self) -> Vec<FeatureGroup> {
        self.encoded_groups
            .iter()
            .filter_map(|g| {
                let slots: Vec<usize> = g
                    .slots
                    .iter()
                    .filter_map(|s| self.selected.iter().position(|x| x == s))
                    .collect();
                (!slots.is_empty()).then(|| FeatureGroup {
                    source: g.source.clone(),
                    slots,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSchema, Table};
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn numeric_table(cols: Vec<(&str, Vec<Option<f64>>)>, y: Vec<u8>) -> Table {
        let columns = cols
            .into_iter()
            .map(|(n, c)| Column::from_options(ColumnSchema::numeric(n), &c))
            .collect();
        Table::with_source_ids(columns, y).unwrap()
    }

    #[test]
    fn sparse_threshold_boundaries() {
        let n = 1635;
        let mut cells = vec![Some(1.0); n];
        for c in cells.iter_mut().take(501) {
            *c = None;
        }
        let t = numeric_table(vec![("sparse", cells), ("full", vec![Some(2.0); n])], vec![0; n]);
        let (kept, dropped) = drop_sparse_columns(&t, SparseThreshold::Count(500)).unwrap();
        assert_eq!(kept.column_names(), vec!["full"]);
        assert_eq!(dropped, vec!["sparse"]);

        let full = numeric_table(vec![("a", vec![Some(1.0); 4])], vec![0; 4]);
        assert_eq!(drop_sparse_columns(&full, SparseThreshold::Count(0)).unwrap().0, full);

        let one = numeric_table(vec![("a", vec![Some(1.0), None])], vec![0, 1]);
        assert!(matches!(
            drop_sparse_columns(&one, SparseThreshold::Count(0)),
            Err(Error::AllColumnsRemoved)
        ));
    }

    #[test]
    fn impute_mean_only_and_noop() {
        let t = numeric_table(vec![("a", vec![Some(1.0), None, Some(3.0), None])], vec![0, 1, 0, 1]);
        let out = impute(&t, 0, 1e-3).unwrap();
        assert_eq!(out.columns()[0].values, vec![1.0, 2.0, 3.0, 2.0]);

        let clean = numeric_table(vec![("a", vec![Some(1.0), Some(5.0)])], vec![0, 1]);
        assert_eq!(impute(&clean, 10, 1e-3).unwrap(), clean);
    }

    #[test]
    fn impute_mode_for_categoricals() {
        let s = ColumnSchema::categorical("c", ["A", "B", "C"]);
        let col = Column::from_options(s, &[Some(1.0), None, Some(1.0), Some(2.0)]);
        let t = Table::with_source_ids(vec![col], vec![0, 0, 1, 1]).unwrap();
        let out = impute(&t, 10, 1e-3).unwrap();
        assert_eq!(out.columns()[0].values[1], 1.0);
    }

    #[test]
    fn chained_imputation_recovers_linear_relation() {
        let mut r = rng::rng(42);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let y_true: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y: Vec<Option<f64>> = y_true
            .iter()
            .map(|&v| if r.random::<f64>() < 0.2 { None } else { Some(v) })
            .collect();
        let std_y = {
            let m = y_true.iter().sum::<f64>() / n as f64;
            (y_true.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let x_cells = x.iter().map(|&v| Some(v)).collect();
        let t = numeric_table(vec![("x", x_cells), ("y", y.clone())], vec![0; n]);
        let (imp, out) = Imputer::fit(&t, 10, 1e-3, 1e-3).unwrap();
        for i in 0..n {
            if y[i].is_none() {
                assert!((out.columns()[1].values[i] - 2.0 * x[i]).abs() < 0.05 * std_y);
            }
        }
        let hist = imp.max_change_history();
        assert!(!hist.is_empty() && hist.len() <= 10);
        assert_eq!(imp.apply(&t).unwrap(), out);
    }

    #[test]
    fn impute_rejects_empty_column() {
        let t = numeric_table(vec![("a", vec![None, None])], vec![0, 1]);
        assert!(matches!(impute(&t, 1, 1e-3), Err(Error::ColumnEntirelyMissing(_))));
    }

    #[test]
    fn one_hot_layout() {
        let s = ColumnSchema::categorical("c", ["A", "B"]);
        let t = Table::with_source_ids(
            vec![Column::dense(s, vec![0.0, 1.0, 0.0])],
            vec![0, 1, 0],
        )
        .unwrap();
        let e = one_hot_encode(&t).unwrap();
        assert_eq!(e.matrix, array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);

        let cols = vec![
            ColumnSchema::categorical("a", ["x", "y", "z"]),
            ColumnSchema::numeric("n1"),
            ColumnSchema::categorical("b", ["p", "q"]),
            ColumnSchema::numeric("n2"),
            ColumnSchema::numeric("n3"),
            ColumnSchema::numeric("n4"),
        ];
        assert_eq!(encoded_layout(&cols).0.len(), 9);

        let missing = Table::with_source_ids(
            vec![Column::from_options(ColumnSchema::numeric("n"), &[None])],
            vec![0],
        )
        .unwrap();
        assert!(matches!(one_hot_encode(&missing), Err(Error::MissingCell { .. })));
    }

    #[test]
    fn scaler_behaviour() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let s = Scaler::fit(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        let e = 1.224_744_871_391_589;
        assert!((z[[0, 0]] + e).abs() < 1e-12 && z[[1, 0]].abs() < 1e-12 && (z[[2, 0]] - e).abs() < 1e-12);
        assert_eq!(s.zero_variance, vec![false, true]);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        let test = s.apply(array![[10.0, 5.0]].view()).unwrap();
        assert!(test[[0, 0]] > 1.0);
    }

    #[test]
    fn anova_fixtures() {
        let x = array![[1.0, 7.0, 0.0], [2.0, 7.0, 0.0], [3.0, 7.0, 1.0], [3.0, 7.0, 1.0], [4.0, 7.0, 1.0], [5.0, 7.0, 1.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let s = anova_f_scores(x.view(), &y).unwrap();
        assert!((s[0].ms_between - 6.0).abs() < 1e-12);
        assert!((s[0].ms_within - 1.0).abs() < 1e-12);
        assert!((s[0].f - 6.0).abs() < 1e-12);
        assert_eq!(s[1].f, 0.0);

        let d = anova_f_scores(array![[0.0], [0.0], [1.0], [1.0]].view(), &[0, 0, 1, 1]).unwrap();
        assert!(d[0].degenerate && d[0].f.is_infinite());
    }

    #[test]
    fn top_k_selection() {
        let mk = |f: &[f64]| -> Vec<AnovaScore> {
            f.iter()
                .enumerate()
                .map(|(i, &f)| AnovaScore { feature: i, f, ms_between: 0.0, ms_within: 1.0, degenerate: false })
                .collect()
        };
        assert_eq!(select_top_k(&mk(&[6.0, 0.0, f64::INFINITY]), 2).unwrap(), vec![2, 0]);
        assert_eq!(select_top_k(&mk(&[1.0, 1.0, 1.0]), 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_top_k(&mk(&[2.0, 3.0]), 1).unwrap(), vec![1]);
        assert!(select_top_k(&mk(&[1.0]), 2).is_err());
        assert!(select_top_k(&mk(&[1.0]), 0).is_err());
    }

    #[test]
    fn pipeline_ignores_test_statistics() {
        let n = 60;
        let mut r = rng::rng(3);
        let a: Vec<Option<f64>> = (0..n).map(|i| if i % 7 == 0 { None } else { Some(r.random::<f64>()) }).collect();
        let b: Vec<Option<f64>> = (0..n).map(|_| Some(r.random::<f64>())).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let t = numeric_table(vec![("a", a), ("b", b)], y);
        let train = t.take_rows(&(0..40).collect::<Vec<_>>());
        let test = t.take_rows(&(40..60).collect::<Vec<_>>());
        let cfg = PreprocessConfig::default();
        let p1 = FittedPipeline::fit(&train, &cfg).unwrap();
        let before = p1.transform(&test).unwrap();
        let mutated = numeric_table(
            vec![("a", vec![Some(1e6); 20]), ("b", vec![None; 20])],
            test.target().to_vec(),
        );
        let p2 = FittedPipeline::fit(&train, &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.transform(&test).unwrap(), before);
        assert_eq!(p1.transform(&mutated).unwrap().ncols(), 2);
        let tr = p1.transform(&train).unwrap();
        assert_eq!(tr.ncols(), p1.n_features());
    }

    fn brute_anova(a: &[f64], b: &[f64]) -> (f64, f64) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let all: Vec<f64> = a.iter().chain(b).copied().collect();
        let g = mean(&all);
        let msb = a.len() as f64 * (mean(a) - g).powi(2) + b.len() as f64 * (mean(b) - g).powi(2);
        let ssw: f64 = a.iter().map(|v| (v - mean(a)).powi(2)).sum::<f64>()
            + b.iter().map(|v| (v - mean(b)).powi(2)).sum::<f64>();
        (msb, ssw / (all.len() as f64 - 2.0))
    }

    proptest! {
        #[test]
        fn anova_matches_brute_force(vals in prop::collection::vec(-10.0f64..10.0, 4..30), split in 2usize..28) {
            let split = split.min(vals.len() - 2);
            let y: Vec<u8> = (0..vals.len()).map(|i| (i >= split) as u8).collect();
            let x = Array2::from_shape_vec((vals.len(), 1), vals.clone()).unwrap();
            let s = anova_f_scores(x.view(), &y).unwrap();
            let (msb, msw) = brute_anova(&vals[..split], &vals[split..]);
            prop_assert!((s[0].ms_between - msb).abs() < 1e-10 * msb.max(1.0));
            prop_assert!((s[0].ms_within - msw).abs() < 1e-10 * msw.max(1.0));
            if msw > 1e-9 {
                prop_assert!((s[0].f - msb / msw).abs() < 1e-10 * (msb / msw).max(1.0));
            }
        }

        #[test]
        fn one_hot_rows_sum_to_one(codes in prop::collection::vec(0usize..4, 1..40)) {
            let s = ColumnSchema::categorical("c", ["a", "b", "c", "d"]);
            let t = Table::with_source_ids(
                vec![Column::dense(s, codes.iter().map(|&c| c as f64).collect())],
                vec![0; codes.len()],
            ).unwrap();
            let e = one_hot_encode(&t).unwrap();
            for row in e.matrix.rows() {
                prop_assert_eq!(row.sum(), 1.0);
            }
        }
    }
}
