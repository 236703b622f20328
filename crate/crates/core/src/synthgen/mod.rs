//! Minority-class generators and the edge-case cohort sampler. Every
//! generator emits rows in the schema of the table it was fitted on, all
//! labelled positive.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, ColumnSchema, EdgeDistribution, RowId, Table};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub mod arf;
pub mod copula;
pub mod nn;
pub mod tvae;

pub use arf::{Arf, ArfParams};
pub use copula::Copula;
pub use tvae::{Tvae, TvaeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Copula,
    Arf,
    Tvae,
    Edge,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Copula => "copula",
            GeneratorKind::Arf => "arf",
            GeneratorKind::Tvae => "tvae",
            GeneratorKind::Edge => "edge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "copula" | "gaussian_copula" => GeneratorKind::Copula,
            "arf" => GeneratorKind::Arf,
            "tvae" => GeneratorKind::Tvae,
            "edge" => GeneratorKind::Edge,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub arf: ArfParams,
    pub tvae: TvaeParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GeneratorModel {
    Copula(Copula),
    Arf(Arf),
    Tvae(Tvae),
    Edge,
}

/// Sorted identities of the rows a generator was fitted on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint(Vec<RowId>);

impl Fingerprint {
    pub fn of(rows: &[RowId]) -> Self {
        let set: BTreeSet<RowId> = rows.iter().copied().collect();
        Fingerprint(set.into_iter().collect())
    }

    pub fn contains(&self, id: RowId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn rows(&self) -> &[RowId] {
        &self.0
    }

    /// True when any of `ids` was used for fitting.
    pub fn intersects(&self, ids: &[RowId]) -> bool {
        ids.iter().any(|&id| self.contains(id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedGenerator {
    kind: GeneratorKind,
    schema: Vec<ColumnSchema>,
    fingerprint: Fingerprint,
    model: GeneratorModel,
}

fn dense_columns(t: &Table) -> Result<Vec<Vec<f64>>> {
    t.columns()
        .iter()
        .map(|c| {
            if let Some(row) = c.missing.iter().position(|&m| m) {
                return Err(Error::MissingCell {
                    column: c.name().to_string(),
                    row,
                });
            }
            Ok(c.values.clone())
        })
        .collect()
}

fn check_edge_spec(schema: &[ColumnSchema]) -> Result<()> {
    match schema.iter().find(|c| c.edge.is_none()) {
        Some(c) => Err(Error::EdgeSpecMissing(c.name.clone())),
        None => Ok(()),
    }
}

impl FittedGenerator {
    /// Fits a generator on `rows`, which must be free of missing cells.
    /// An edge generator only checks that every column carries an edge
    /// distribution.
    pub fn fit(kind: GeneratorKind, rows: &Table, params: &GeneratorParams, seed: u64) -> Result<FittedGenerator> {
        let schema = rows.schema();
        let model = match kind {
            GeneratorKind::Edge => {
                check_edge_spec(&schema)?;
                GeneratorModel::Edge
            }
            GeneratorKind::Copula => GeneratorModel::Copula(Copula::fit(&schema, &dense_columns(rows)?)?),
            GeneratorKind::Arf => GeneratorModel::Arf(Arf::fit(&schema, &dense_columns(rows)?, &params.arf, seed)?),
            GeneratorKind::Tvae => GeneratorModel::Tvae(Tvae::fit(&schema, &dense_columns(rows)?, &params.tvae, seed)?),
        };
        let fingerprint = if kind == GeneratorKind::Edge {
            Fingerprint::default()
        } else {
            Fingerprint::of(rows.row_ids())
        };
        Ok(FittedGenerator {
            kind,
            schema,
            fingerprint,
            model,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    /// Discriminator accuracy per adversarial round (ARF only).
    pub fn arf_rounds(&self) -> Option<&[f64]> {
        match &self.model {
            GeneratorModel::Arf(a) => Some(&a.oob_accuracy),
            _ => None,
        }
    }

    /// Training curve (TVAE only).
    pub fn tvae_loss(&self) -> Option<&[f64]> {
        match &self.model {
            GeneratorModel::Tvae(t) => Some(&t.epoch_loss),
            _ => None,
        }
    }

    /// `n` positive rows; identical for identical `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Table> {
        let mut r = rng::derived_rng(seed, &[rng::tag("generator_sample"), rng::tag(self.kind.name())]);
        let cols = match &self.model {
            GeneratorModel::Copula(c) => c.sample(n, &mut r),
            GeneratorModel::Arf(a) => a.sample(n, &mut r),
            GeneratorModel::Tvae(t) => t.sample(n, &mut r),
            GeneratorModel::Edge => edge_columns(&self.schema, n, &mut r)?,
        };
        build_table(&self.schema, cols, n, rng::derive_seed(seed, &[rng::tag(self.kind.name())]))
    }
}

fn build_table(schema: &[ColumnSchema], cols: Vec<Vec<f64>>, n: usize, stream: u64) -> Result<Table> {
    let columns = schema
        .iter()
        .zip(cols)
        .map(|(s, v)| Column::dense(s.clone(), v))
        .collect();
    let ids = (0..n).map(|i| RowId::synthetic(stream, i)).collect();
    Table::new(columns, vec![1; n], ids)
}

fn edge_columns(schema: &[ColumnSchema], n: usize, r: &mut Rng) -> Result<Vec<Vec<f64>>> {
    check_edge_spec(schema)?;
    let mut cols = vec![Vec::with_capacity(n); schema.len()];
    for _ in 0..n {
        for (j, c) in schema.iter().enumerate() {
            let v = match (c.kind, c.edge.as_ref().expect("checked")) {
                (ColumnKind::Numeric, EdgeDistribution::Normal { mu, sigma }) => {
                    let e: f64 = StandardNormal.sample(r);
                    mu + sigma * e
                }
                (ColumnKind::Categorical, EdgeDistribution::Categorical { probs }) => {
                    let u: f64 = r.random();
                    let mut acc = 0.0;
                    let mut pick = None;
                    let mut last_positive = 0;
                    for (k, name) in c.categories.iter().enumerate() {
                        let p = probs.get(name).copied().unwrap_or(0.0);
                        if p > 0.0 {
                            last_positive = k;
                        }
                        acc += p;
                        if pick.is_none() && u < acc {
                            pick = Some(k);
                        }
                    }
                    pick.unwrap_or(last_positive) as f64
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "edge distribution of `{}` does not match its kind",
                        c.name
                    )))
                }
            };
            cols[j].push(v);
        }
    }
    Ok(cols)
}

/// Edge-case cohort: numerics from `N(mu, sigma)`, categoricals from their
/// probability tables, every row labelled positive.
pub fn sample_edge_cases(schema: &[ColumnSchema], n: usize, seed: u64) -> Result<Table> {
    FittedGenerator {
        kind: GeneratorKind::Edge,
        schema: schema.to_vec(),
        fingerprint: Fingerprint::default(),
        model: GeneratorModel::Edge,
    }
    .sample(n, seed)
}
