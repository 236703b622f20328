//! Adversarial random forest: a discriminator forest is trained to tell
//! real rows from synthetic ones, synthetic rows are regenerated from the
//! forest's leaves until the discriminator can no longer separate them, and
//! the final forest's leaves become a mixture of independent per-feature
//! densities.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ColumnKind, ColumnSchema};
use crate::error::{Error, Result};
use crate::models::tree::{Node, Tree};
use crate::models::{ForestParams, MaxFeatures, RandomForest};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArfParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Stop once out-of-bag accuracy is at most `0.5 + delta`.
    pub delta: f64,
    pub max_rounds: usize,
}

impl Default for ArfParams {
    fn default() -> Self {
        ArfParams {
            n_trees: 30,
            min_leaf: 5,
            delta: 0.05,
            max_rounds: 10,
        }
    }
}

impl ArfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.max_rounds == 0 || !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid ARF parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafDist {
    /// Normal with the leaf's moments, truncated to the leaf's bounds.
    TruncNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
    Categorical { probs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Real rows reaching the leaf.
    pub coverage: usize,
    pub dists: Vec<LeafDist>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arf {
    /// Per tree, the leaves with non-zero real coverage.
    pub trees: Vec<Vec<Leaf>>,
    /// Discriminator out-of-bag accuracy per round.
    pub oob_accuracy: Vec<f64>,
    pub converged: bool,
    /// Set when the discriminator never split; sampling then draws every
    /// column independently from these training values.
    pub fallback_marginals: Option<Vec<Vec<f64>>>,
}

fn to_matrix(columns: &[Vec<f64>], n: usize) -> Vec<f64> {
    let d = columns.len();
    let mut m = vec![0.0; n * d];
    for (j, c) in columns.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            m[i * d + j] = v;
        }
    }
    m
}

fn permute_columns(columns: &[Vec<f64>], r: &mut Rng) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.shuffle(r);
            c
        })
        .collect()
}

/// Leaf index reached by every real row in each tree, plus per-leaf bounds.
struct LeafMap {
    /// `rows[t][leaf_node]` lists real rows in that node.
    rows: Vec<Vec<Vec<usize>>>,
    bounds: Vec<Vec<Vec<(f64, f64)>>>,
}

fn leaf_bounds(tree: &Tree, base: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let nodes = tree.nodes();
    let mut out = vec![Vec::new(); nodes.len()];
    let mut stack = vec![(0usize, base.to_vec())];
    while let Some((i, b)) = stack.pop() {
        match &nodes[i] {
            Node::Leaf { .. } => out[i] = b,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let mut lb = b.clone();
                lb[*feature].1 = lb[*feature].1.min(*threshold);
                let mut rb = b;
                rb[*feature].0 = rb[*feature].0.max(*threshold);
                stack.push((*left, lb));
                stack.push((*right, rb));
            }
        }
    }
    out
}

fn map_leaves(forest: &RandomForest, data: &[f64], n: usize, d: usize, base: &[(f64, f64)]) -> LeafMap {
    let mut rows = Vec::with_capacity(forest.trees().len());
    let mut bounds = Vec::with_capacity(forest.trees().len());
    for tree in forest.trees() {
        let mut per = vec![Vec::new(); tree.nodes().len()];
        for i in 0..n {
            per[tree.leaf_of(&data[i * d..(i + 1) * d])].push(i);
        }
        rows.push(per);
        bounds.push(leaf_bounds(tree, base));
    }
    LeafMap { rows, bounds }
}

/// Draws rows by picking a tree uniformly, a leaf in proportion to its real
/// coverage, then each column from an independent real row of that leaf.
fn resample(columns: &[Vec<f64>], map: &LeafMap, n: usize, r: &mut Rng) -> Vec<Vec<f64>> {
    let d = columns.len();
    let mut out = vec![Vec::with_capacity(n); d];
    for _ in 0..n {
        let t = r.random_range(0..map.rows.len());
        let total: usize = map.rows[t].iter().map(Vec::len).sum();
        let mut pick = r.random_range(0..total);
        let leaf = map.rows[t]
            .iter()
            .find(|rows| {
                if pick < rows.len() {
                    true
                } else {
                    pick -= rows.len();
                    false
                }
            })
            .expect("pick within total coverage");
        for (j, col) in columns.iter().enumerate() {
            out[j].push(col[leaf[r.random_range(0..leaf.len())]]);
        }
    }
    out
}

fn discriminate(
    real: &[f64],
    synth: &[Vec<f64>],
    n: usize,
    d: usize,
    params: &ArfParams,
    seed: u64,
) -> Result<(RandomForest, f64)> {
    let m = synth.first().map_or(0, Vec::len);
    let mut data = real.to_vec();
    data.extend(to_matrix(synth, m));
    let x = Array2::from_shape_vec((n + m, d), data).expect("shape matches");
    let mut y = vec![1u8; n];
    y.extend(std::iter::repeat_n(0u8, m));
    let fp = ForestParams {
        n_trees: params.n_trees,
        max_depth: None,
        min_leaf: params.min_leaf,
        min_split: 2 * params.min_leaf,
        max_features: MaxFeatures::Sqrt,
        bootstrap: true,
    };
    let fit = RandomForest::fit_with_oob(x.view(), &y, &fp, seed)?;
    let (mut hit, mut seen) = (0usize, 0usize);
    for (p, &label) in fit.oob.iter().zip(&y) {
        if let Some(p) = p {
            seen += 1;
            if (*p >= 0.5) == (label == 1) {
                hit += 1;
            }
        }
    }
    Ok((fit.forest, hit as f64 / seen.max(1) as f64))
}

impl Arf {
    pub fn fit(schema: &[ColumnSchema], columns: &[Vec<f64>], params: &ArfParams, seed: u64) -> Result<Arf> {
        let n = columns.first().map_or(0, Vec::len);
        if n < 20 {
            return Err(Error::InvalidArgument(format!("ARF needs at least 20 rows, got {n}")));
        }
        params.validate()?;
        let d = columns.len();
        let real = to_matrix(columns, n);
        let base: Vec<(f64, f64)> = columns
            .iter()
            .map(|c| c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))))
            .collect();
        let mut r = rng::derived_rng(seed, &[rng::tag("arf_synthetic")]);
        let mut synth = permute_columns(columns, &mut r);
        let mut oob_accuracy = Vec::new();
        let mut converged = false;
        let mut forest;
        let mut round: u64 = 0;
        loop {
            let (f, acc) = discriminate(&real, &synth, n, d, params, rng::derive_seed(seed, &[rng::tag("arf_round"), round]))?;
            forest = f;
            oob_accuracy.push(acc);
            round += 1;
            if acc <= 0.5 + params.delta {
                converged = true;
                break;
            }
            if round as usize >= params.max_rounds {
                break;
            }
            let map = map_leaves(&forest, &real, n, d, &base);
            synth = resample(columns, &map, n, &mut r);
        }
        if forest.trees().iter().all(|t| t.nodes().len() == 1) {
            log::warn!("ARF discriminator never split; sampling independent marginals");
            return Ok(Arf {
                trees: Vec::new(),
                oob_accuracy,
                converged,
                fallback_marginals: Some(columns.to_vec()),
            });
        }
        let map = map_leaves(&forest, &real, n, d, &base);
        let trees = map
            .rows
            .iter()
            .zip(&map.bounds)
            .map(|(per, bounds)| {
                per.iter()
                    .enumerate()
                    .filter(|(_, rows)| !rows.is_empty())
                    .map(|(node, rows)| Leaf {
                        coverage: rows.len(),
                        dists: schema
                            .iter()
                            .zip(columns)
                            .enumerate()
                            .map(|(j, (c, col))| match c.kind {
                                ColumnKind::Numeric => {
                                    let k = rows.len() as f64;
                                    let mu = rows.iter().map(|&i| col[i]).sum::<f64>() / k;
                                    let var = rows.iter().map(|&i| (col[i] - mu).powi(2)).sum::<f64>() / k;
                                    let (lo, hi) = bounds[node][j];
                                    LeafDist::TruncNormal {
                                        mu,
                                        sigma: var.sqrt(),
                                        lo,
                                        hi,
                                    }
                                }
                                ColumnKind::Categorical => {
                                    let mut probs = vec![0.0; c.categories.len()];
                                    for &i in rows {
                                        probs[col[i] as usize] += 1.0 / rows.len() as f64;
                                    }
                                    LeafDist::Categorical { probs }
                                }
                            })
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Ok(Arf {
            trees,
            oob_accuracy,
            converged,
            fallback_marginals: None,
        })
    }

    pub fn sample(&self, n: usize, r: &mut Rng) -> Vec<Vec<f64>> {
        if let Some(m) = &self.fallback_marginals {
            return m
                .iter()
                .map(|col| (0..n).map(|_| col[r.random_range(0..col.len())]).collect())
                .collect();
        }
        let d = self.trees[0][0].dists.len();
        let normal = Normal::standard();
        let mut out = vec![Vec::with_capacity(n); d];
        for _ in 0..n {
            let leaves = &self.trees[r.random_range(0..self.trees.len())];
            let total: usize = leaves.iter().map(|l| l.coverage).sum();
            let mut pick = r.random_range(0..total);
            let leaf = leaves
                .iter()
                .find(|l| {
                    if pick < l.coverage {
                        true
                    } else {
                        pick -= l.coverage;
                        false
                    }
                })
                .expect("pick within total coverage");
            for (j, dist) in leaf.dists.iter().enumerate() {
                out[j].push(match dist {
                    LeafDist::TruncNormal { mu, sigma, lo, hi } => truncated_normal(*mu, *sigma, *lo, *hi, &normal, r),
                    LeafDist::Categorical { probs } => {
                        let u: f64 = r.random();
                        let mut acc = 0.0;
                        let mut k = probs.len() - 1;
                        for (i, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                k = i;
                                break;
                            }
                        }
                        k as f64
                    }
                });
            }
        }
        out
    }
}

/// Inverse-CDF draw from `N(mu, sigma²)` restricted to `[lo, hi]`.
fn truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64, normal: &Normal, r: &mut Rng) -> f64 {
    if sigma <= 0.0 {
        return mu.clamp(lo, hi);
    }
    let a = normal.cdf((lo - mu) / sigma);
    let b = normal.cdf((hi - mu) / sigma);
    let u: f64 = r.random();
    if b - a < 1e-12 {
        return lo + u * (hi - lo);
    }
    let p = (a + u * (b - a)).clamp(1e-300, 1.0 - 1e-16);
    (mu + sigma * normal.inverse_cdf(p)).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn independent_source_converges_first_round() {
        let mut r = rng::rng(1);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..300).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
        let schema: Vec<ColumnSchema> = (0..3).map(|j| ColumnSchema::numeric(format!("x{j}"))).collect();
        let arf = Arf::fit(&schema, &cols, &ArfParams::default(), 7).unwrap();
        assert_eq!(arf.oob_accuracy.len(), 1, "{:?}", arf.oob_accuracy);
        assert!(arf.converged);
    }

    #[test]
    fn keeps_strong_dependence() {
        let mut r = rng::rng(2);
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let schema = [ColumnSchema::numeric("x"), ColumnSchema::numeric("y")];
        let cols = vec![x, y];
        let arf = Arf::fit(&schema, &cols, &ArfParams::default(), 3).unwrap();
        let s = arf.sample(2000, &mut rng::rng(4));
        let naive = permute_columns(&cols, &mut rng::rng(5));
        assert!(corr(&s[0], &s[1]) > 0.5);
        assert!(corr(&naive[0], &naive[1]).abs() < 0.1);
    }

    #[test]
    fn categorical_samples_are_valid_levels() {
        let mut r = rng::rng(6);
        let c: Vec<f64> = (0..100).map(|_| f64::from(r.random_range(0..3u8))).collect();
        let x: Vec<f64> = c.iter().map(|v| v * 2.0 + r.random::<f64>()).collect();
        let schema = [ColumnSchema::categorical("c", ["a", "b", "c"]), ColumnSchema::numeric("x")];
        let arf = Arf::fit(&schema, &[c, x], &ArfParams::default(), 0).unwrap();
        let s = arf.sample(300, &mut rng::rng(1));
        assert!(s[0].iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
        assert!(s[1].iter().all(|v| v.is_finite()));
        assert!(arf.sample(0, &mut rng::rng(1)).iter().all(Vec::is_empty));
    }

    #[test]
    fn truncation_respected() {
        let normal = Normal::standard();
        let mut r = rng::rng(0);
        for _ in 0..1000 {
            let v = truncated_normal(0.0, 1.0, 2.0, 2.5, &normal, &mut r);
            assert!((2.0..=2.5).contains(&v));
        }
        assert_eq!(truncated_normal(3.0, 0.0, 0.0, 1.0, &normal, &mut r), 1.0);
    }
}
