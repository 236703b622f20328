//! Tabular data model, CSV ingestion, stratified splitting and fold planning.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Edge-case sampling distribution attached to a column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeDistribution {
    Normal { mu: f64, sigma: f64 },
    Categorical { probs: BTreeMap<String, f64> },
}

fn default_missing_token() -> String {
    String::new()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default = "default_missing_token")]
    pub missing_token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeDistribution>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
            missing_token: String::new(),
            edge: None,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            missing_token: String::new(),
            edge: None,
        }
    }

    pub fn with_edge(mut self, edge: EdgeDistribution) -> Self {
        self.edge = Some(edge);
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    fn validate(&self) -> Result<()> {
        if self.is_categorical() {
            if self.categories.is_empty() {
                return Err(Error::Schema(format!(
                    "categorical column `{}` declares no categories",
                    self.name
                )));
            }
            let unique: HashSet<&String> = self.categories.iter().collect();
            if unique.len() != self.categories.len() {
                return Err(Error::Schema(format!(
                    "categorical column `{}` repeats a category",
                    self.name
                )));
            }
        }
        match &self.edge {
            Some(EdgeDistribution::Normal { sigma, mu }) => {
                if self.is_categorical() {
                    return Err(Error::Schema(format!(
                        "column `{}` is categorical but its edge spec is a normal",
                        self.name
                    )));
                }
                if !(*sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
                    return Err(Error::Schema(format!(
                        "column `{}` edge spec needs finite mu and sigma >= 0",
                        self.name
                    )));
                }
            }
            Some(EdgeDistribution::Categorical { probs }) => {
                if !self.is_categorical() {
                    return Err(Error::Schema(format!(
                        "column `{}` is numeric but its edge spec is a probability table",
                        self.name
                    )));
                }
                for (k, p) in probs {
                    if !self.categories.contains(k) {
                        return Err(Error::Schema(format!(
                            "edge spec of `{}` names unknown category `{k}`",
                            self.name
                        )));
                    }
                    if !(*p >= 0.0) {
                        return Err(Error::Schema(format!(
                            "edge spec of `{}` has a negative probability",
                            self.name
                        )));
                    }
                }
                let total: f64 = probs.values().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Schema(format!(
                        "edge probabilities of `{}` sum to {total}, not 1",
                        self.name
                    )));
                }
            }
            None => {}
        }
        Ok(())
    }
}

/// Declares the target column and the tokens mapped to 1 and 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    #[serde(default = "default_positive")]
    pub positive: String,
    #[serde(default = "default_negative")]
    pub negative: String,
}

fn default_positive() -> String {
    "1".into()
}

fn default_negative() -> String {
    "0".into()
}

impl TargetSpec {
    pub fn new(name: impl Into<String>) -> Self {
        TargetSpec {
            name: name.into(),
            positive: default_positive(),
            negative: default_negative(),
        }
    }
}

/// Column schema plus edge-case spec in one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: TargetSpec,
    pub columns: Vec<ColumnSchema>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            if c.name == self.target.name {
                return Err(Error::Schema(format!(
                    "column `{}` collides with the target name",
                    c.name
                )));
            }
            c.validate()?;
        }
        if self.target.positive == self.target.negative {
            return Err(Error::Schema("target tokens must differ".into()));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Identity of a row. Source rows carry their position in the ingested
/// file; synthetic rows carry the high bit so they can never collide with a
/// source row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId(pub u64);

impl RowId {
    const SYNTHETIC: u64 = 1 << 63;

    pub fn source(index: usize) -> Self {
        RowId(index as u64)
    }

    pub fn synthetic(stream: u64, index: usize) -> Self {
        RowId(Self::SYNTHETIC | ((stream & 0x7FFF_FFFF) << 32) | (index as u64 & 0xFFFF_FFFF))
    }

    pub fn is_synthetic(self) -> bool {
        self.0 & Self::SYNTHETIC != 0
    }
}

/// One typed column. Categorical cells store the index into
/// `schema.categories`; missing cells hold NaN and are flagged in `missing`.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub schema: ColumnSchema,
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn from_options(schema: ColumnSchema, cells: &[Option<f64>]) -> Self {
        let values = cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let missing = cells.iter().map(Option::is_none).collect();
        Column {
            schema,
            values,
            missing,
        }
    }

    pub fn dense(schema: ColumnSchema, values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        Column {
            schema,
            values,
            missing,
        }
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        (!self.missing[row]).then(|| self.values[row])
    }

    /// Category label of a categorical cell.
    pub fn label(&self, row: usize) -> Option<&str> {
        self.get(row)
            .and_then(|v| self.schema.categories.get(v as usize))
            .map(String::as_str)
    }

    fn cell_text(&self, row: usize) -> String {
        match self.get(row) {
            None => self.schema.missing_token.clone(),
            Some(v) if self.schema.is_categorical() => self.schema.categories[v as usize].clone(),
            Some(v) => format!("{v}"),
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        Column {
            schema: self.schema.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
        }
    }
}

/// Immutable rows × typed columns with a binary target.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    target: Vec<u8>,
    row_ids: Vec<RowId>,
}

impl Table {
    pub fn new(columns: Vec<Column>, target: Vec<u8>, row_ids: Vec<RowId>) -> Result<Self> {
        let n = target.len();
        if row_ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} row ids for {n} rows",
                row_ids.len()
            )));
        }
        if let Some(&bad) = target.iter().find(|&&y| y > 1) {
            return Err(Error::NonBinaryTarget {
                value: bad.to_string(),
                row: target.iter().position(|&y| y == bad).unwrap_or(0),
            });
        }
        let mut names = HashSet::new();
        for c in &columns {
            if c.values.len() != n || c.missing.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "column `{}` has {} cells, table has {n} rows",
                    c.name(),
                    c.values.len()
                )));
            }
            if !names.insert(c.name().to_string()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name())));
            }
            for (row, (&v, &m)) in c.values.iter().zip(&c.missing).enumerate() {
                if m {
                    continue;
                }
                let ok = match c.schema.kind {
                    ColumnKind::Numeric => v.is_finite(),
                    ColumnKind::Categorical => {
                        v >= 0.0 && v.fract() == 0.0 && (v as usize) < c.schema.categories.len()
                    }
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "invalid cell {v} in column `{}` (row {row})",
                        c.name()
                    )));
                }
            }
        }
        Ok(Table {
            columns,
            target,
            row_ids,
        })
    }

    /// Table whose rows are numbered as source rows `0..n`.
    pub fn with_source_ids(columns: Vec<Column>, target: Vec<u8>) -> Result<Self> {
        let ids = (0..target.len()).map(RowId::source).collect();
        Table::new(columns, target, ids)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name().to_string()).collect()
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(|c| c.schema.clone()).collect()
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.row_ids
    }

    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&y| y == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        if self.target.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.n_rows() as f64
        }
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.missing.iter().any(|&m| m))
    }

    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Rows with the given label.
    pub fn class_rows(&self, label: u8) -> Table {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| self.target[i] == label).collect();
        self.take_rows(&idx)
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Table> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Table {
            columns,
            target: self.target.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    /// Replaces every column's values and missing flags, keeping schema and
    /// row identity. Used by imputation.
    pub fn with_columns(&self, columns: Vec<Column>) -> Result<Table> {
        Table::new(columns, self.target.clone(), self.row_ids.clone())
    }

    /// Row-wise concatenation; both tables must have the same columns in the
    /// same order.
    pub fn concat(&self, other: &Table) -> Result<Table> {
        if self.schema() != other.schema() {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| Column {
                schema: a.schema.clone(),
                values: a.values.iter().chain(&b.values).copied().collect(),
                missing: a.missing.iter().chain(&b.missing).copied().collect(),
            })
            .collect();
        Ok(Table {
            columns,
            target: self.target.iter().chain(&other.target).copied().collect(),
            row_ids: self.row_ids.iter().chain(&other.row_ids).copied().collect(),
        })
    }

    pub fn to_csv_string(&self, target: &TargetSpec) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.iter().map(Column::name).collect();
        header.push(&target.name);
        w.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c.cell_text(row)).collect();
            rec.push(if self.target[row] == 1 {
                target.positive.clone()
            } else {
                target.negative.clone()
            });
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, target: &TargetSpec) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string(target)?).map_err(|e| Error::io(path, e))
    }
}

/// Reads a header-first, comma-delimited UTF-8 file against a schema.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, target_name: &str) -> Result<Table> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema, target_name)
}

pub fn parse_csv(text: &str, schema: &Schema, target_name: &str) -> Result<Table> {
    if target_name != schema.target.name {
        return Err(Error::Schema(format!(
            "target `{target_name}` does not match schema target `{}`",
            schema.target.name
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut target_pos = None;
    let mut col_pos = vec![usize::MAX; schema.columns.len()];
    for (i, h) in header.iter().enumerate() {
        if h == target_name {
            target_pos = Some(i);
        } else if let Some(j) = schema.columns.iter().position(|c| &c.name == h) {
            col_pos[j] = i;
        } else {
            return Err(Error::UnknownColumn(h.clone()));
        }
    }
    let target_pos = target_pos.ok_or_else(|| Error::MissingColumn(target_name.to_string()))?;
    if let Some(j) = col_pos.iter().position(|&p| p == usize::MAX) {
        return Err(Error::MissingColumn(schema.columns[j].name.clone()));
    }

    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.columns.len()];
    let mut target = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let t = rec[target_pos].trim();
        target.push(if t == schema.target.positive {
            1
        } else if t == schema.target.negative {
            0
        } else {
            return Err(Error::NonBinaryTarget {
                value: t.to_string(),
                row,
            });
        });
        for (j, col) in schema.columns.iter().enumerate() {
            let raw = rec[col_pos[j]].trim();
            let cell = if raw == col.missing_token.trim() {
                None
            } else {
                Some(match col.kind {
                    ColumnKind::Numeric => match raw.parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => {
                            return Err(Error::NotNumeric {
                                column: col.name.clone(),
                                value: raw.to_string(),
                                row,
                            })
                        }
                    },
                    ColumnKind::Categorical => match col.categories.iter().position(|c| c == raw) {
                        Some(k) => k as f64,
                        None => {
                            return Err(Error::UnmappedCategory {
                                column: col.name.clone(),
                                value: raw.to_string(),
                                row,
                            })
                        }
                    },
                })
            };
            cells[j].push(cell);
        }
    }
    let columns = schema
        .columns
        .iter()
        .zip(&cells)
        .map(|(s, c)| Column::from_options(s.clone(), c))
        .collect();
    Table::with_source_ids(columns, target)
}

/// Number of test rows per class: `round(n·frac)` rows in total, each class
/// receives `floor(n_c·frac)`, and leftover seats go to the larger classes
/// first. This keeps the minority's fractional remainder on the train side.
fn test_allocation(class_sizes: &[usize; 2], test_frac: f64) -> [usize; 2] {
    let n: usize = class_sizes.iter().sum();
    let n_test = ((n as f64 * test_frac).round() as usize).clamp(1, n.saturating_sub(1));
    let mut alloc = [
        (class_sizes[0] as f64 * test_frac).floor() as usize,
        (class_sizes[1] as f64 * test_frac).floor() as usize,
    ];
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| class_sizes[b].cmp(&class_sizes[a]).then(a.cmp(&b)));
    let mut left = n_test.saturating_sub(alloc[0] + alloc[1]);
    while left > 0 {
        let mut placed = false;
        for &c in &order {
            if left > 0 && alloc[c] < class_sizes[c] {
                alloc[c] += 1;
                left -= 1;
                placed = true;
            }
        }
        if !placed {
            break;
        }
    }
    alloc
}

fn class_indices(target: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in target.iter().enumerate() {
        out[y as usize].push(i);
    }
    out
}

/// Stratified train/test split. Returns `(train, test)` with the original
/// row order preserved inside each side.
pub fn stratified_split(t: &Table, test_frac: f64, seed: u64) -> Result<(Table, Table)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_frac} must lie strictly between 0 and 1"
        )));
    }
    let mut classes = class_indices(t.target());
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::SingleClass("stratified split needs both labels".into()));
    }
    let alloc = test_allocation(&[classes[0].len(), classes[1].len()], test_frac);
    let mut rng = rng::derived_rng(seed, &[rng::tag("stratified_split")]);
    let mut test = Vec::new();
    let mut train = Vec::new();
    for (label, idx) in classes.iter_mut().enumerate() {
        if alloc[label] == 0 || alloc[label] == idx.len() {
            return Err(Error::InvalidArgument(format!(
                "class {label} ({} rows) would leave one side of the split empty",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..alloc[label]]);
        train.extend_from_slice(&idx[alloc[label]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((t.take_rows(&train), t.take_rows(&test)))
}

/// Assignment of every row to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// `(train_rows, eval_rows)` for one fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                eval.push(i);
            } else {
                train.push(i);
            }
        }
        (train, eval)
    }
}

pub fn stratified_kfold(t: &Table, k: usize, seed: u64) -> Result<FoldPlan> {
    stratified_kfold_labels(t.target(), k, seed)
}

/// Shuffles each class and deals it round-robin across folds, continuing
/// the dealing position from one class to the next so fold sizes stay
/// within one of each other.
pub fn stratified_kfold_labels(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}; need at least 2 folds")));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available rows",
            labels.len()
        )));
    }
    let mut rng = rng::derived_rng(seed, &[rng::tag("stratified_kfold"), k as u64]);
    let mut classes = class_indices(labels);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for idx in classes.iter_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignments })
}
