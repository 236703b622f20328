use ndarray::ArrayView2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_gini, GiniParams, Rows, Tree};
use super::{check_dims, check_training_data, ProbabilisticClassifier};
use crate::error::{Error, Result};
use crate::rng;

/// Features examined per split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let m = match self {
            MaxFeatures::Sqrt => n.sqrt().floor(),
            MaxFeatures::Log2 => n.log2().floor(),
            MaxFeatures::All => n,
            MaxFeatures::Fraction(f) => (f * n).floor(),
        };
        (m as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub min_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 300,
            max_depth: Some(6),
            min_leaf: 1,
            min_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = match self.max_features {
            MaxFeatures::Fraction(f) => f > 0.0 && f <= 1.0,
            _ => true,
        };
        if self.n_trees == 0
            || self.min_leaf == 0
            || self.min_split == 0
            || self.max_depth == Some(0)
            || !frac_ok
        {
            return Err(Error::InvalidArgument(format!("invalid forest hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Bagged CART ensemble; the probability is the mean of leaf positive
/// fractions over trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
}

/// A forest plus its out-of-bag predictions on the training rows.
pub struct ForestWithOob {
    pub forest: RandomForest,
    /// Mean prediction over trees for which the row was out of bag.
    pub oob: Vec<Option<f64>>,
}

impl RandomForest {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], params: &ForestParams, seed: u64) -> Result<Self> {
        Ok(Self::fit_with_oob(x, y, params, seed)?.forest)
    }

    pub fn fit_with_oob(x: ArrayView2<f64>, y: &[u8], params: &ForestParams, seed: u64) -> Result<ForestWithOob> {
        check_training_data(x, y)?;
        params.validate()?;
        let dense = x.as_standard_layout();
        let data = dense.as_slice().expect("standard layout");
        let rows = Rows::new(data, x.ncols());
        let n = x.nrows();
        let gini = GiniParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            min_split: params.min_split,
            mtry: params.max_features.resolve(x.ncols()),
        };
        let grown: Vec<(Tree, Vec<bool>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::derived_rng(seed, &[rng::tag("forest_tree"), t as u64]);
                let mut in_bag = vec![!params.bootstrap; n];
                let sample: Vec<usize> = if params.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = r.random_range(0..n);
                            in_bag[i] = true;
                            i
                        })
                        .collect()
                } else {
                    (0..n).collect()
                };
                (grow_gini(rows, y, sample, gini, &mut r), in_bag)
            })
            .collect();
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0usize; n];
        for (tree, in_bag) in &grown {
            for i in 0..n {
                if !in_bag[i] {
                    sum[i] += tree.predict_row(rows.row(i));
                    cnt[i] += 1;
                }
            }
        }
        let oob = sum
            .iter()
            .zip(&cnt)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(ForestWithOob {
            forest: RandomForest {
                trees: grown.into_iter().map(|(t, _)| t).collect(),
                n_features: x.ncols(),
            },
            oob,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

impl ProbabilisticClassifier for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.n_features, x)?;
        let dense = x.as_standard_layout();
        let rows = Rows::new(dense.as_slice().expect("standard layout"), x.ncols());
        let k = self.trees.len() as f64;
        Ok((0..x.nrows())
            .map(|i| {
                let row = rows.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect())
    }
}
