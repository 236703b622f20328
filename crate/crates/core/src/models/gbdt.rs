use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{grow_newton, NewtonParams, Rows, Tree};
use super::{check_dims, check_training_data, log_loss, logit, sigmoid, ProbabilisticClassifier};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    /// Row fraction drawn without replacement for each round.
    pub subsample: f64,
    /// Column fraction drawn for each tree.
    pub colsample: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample: 1.0,
            lambda: 1.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_depth >= 1
            && self.learning_rate >= 0.0
            && self.min_child_weight >= 0.0
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.colsample > 0.0
            && self.colsample <= 1.0
            && self.lambda >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid boosting hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Gradient-boosted trees on the logit scale with Newton leaf weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    n_features: usize,
    /// Training log-loss after each round, starting with the base score.
    pub train_loss: Vec<f64>,
}

impl Gbdt {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], params: &GbdtParams, seed: u64) -> Result<Self> {
        check_training_data(x, y)?;
        params.validate()?;
        let n = x.nrows();
        let d = x.ncols();
        let dense = x.as_standard_layout();
        let rows = Rows::new(dense.as_slice().expect("standard layout"), d);
        let prevalence = (y.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = logit(prevalence);
        let mut margin = vec![base_score; n];
        let probs = |m: &[f64]| m.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>();
        let mut train_loss = vec![log_loss(&probs(&margin), y)];
        let tree_params = NewtonParams {
            max_depth: params.max_depth,
            min_child_weight: params.min_child_weight,
            lambda: params.lambda,
        };
        let mut r = rng::derived_rng(seed, &[rng::tag("gbdt")]);
        let mut trees = Vec::with_capacity(params.n_rounds);
        for _ in 0..params.n_rounds {
            let p = probs(&margin);
            let grad: Vec<f64> = p.iter().zip(y).map(|(&p, &y)| p - f64::from(y)).collect();
            let hess: Vec<f64> = p.iter().map(|&p| (p * (1.0 - p)).max(1e-16)).collect();
            let sample_rows: Vec<usize> = if params.subsample < 1.0 {
                let k = ((params.subsample * n as f64).round() as usize).max(1);
                let mut s = sample(&mut r, n, k).into_vec();
                s.sort_unstable();
                s
            } else {
                (0..n).collect()
            };
            let features: Vec<usize> = if params.colsample < 1.0 {
                let k = ((params.colsample * d as f64).round() as usize).clamp(1, d.max(1));
                let mut s = sample(&mut r, d, k).into_vec();
                s.sort_unstable();
                s
            } else {
                (0..d).collect()
            };
            let tree = grow_newton(rows, &grad, &hess, sample_rows, &features, tree_params);
            for (i, m) in margin.iter_mut().enumerate() {
                *m += params.learning_rate * tree.predict_row(rows.row(i));
            }
            train_loss.push(log_loss(&probs(&margin), y));
            trees.push(tree);
        }
        Ok(Gbdt {
            base_score,
            learning_rate: params.learning_rate,
            trees,
            n_features: d,
            train_loss,
        })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }
}

impl ProbabilisticClassifier for Gbdt {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.n_features, x)?;
        let dense = x.as_standard_layout();
        let rows = Rows::new(dense.as_slice().expect("standard layout"), x.ncols());
        Ok((0..x.nrows())
            .map(|i| {
                let row = rows.row(i);
                let m = self.base_score
                    + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>();
                sigmoid(m)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn noisy(n: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut r = rng::rng(seed);
        let x = Array2::from_shape_fn((n, 4), |_| r.random::<f64>() * 2.0 - 1.0);
        let y = x
            .rows()
            .into_iter()
            .map(|row| (r.random::<f64>() < sigmoid(2.0 * row[0] - row[1] * row[2])) as u8)
            .collect();
        (x, y)
    }

    #[test]
    fn zero_rounds_predict_prevalence() {
        let (x, y) = noisy(100, 1);
        let prev = y.iter().map(|&v| f64::from(v)).sum::<f64>() / 100.0;
        let m = Gbdt::fit(x.view(), &y, &GbdtParams { n_rounds: 0, ..Default::default() }, 0).unwrap();
        assert!(m.predict_proba(x.view()).unwrap().iter().all(|p| (p - prev).abs() < 1e-12));
        let m = Gbdt::fit(x.view(), &y, &GbdtParams { learning_rate: 0.0, n_rounds: 10, ..Default::default() }, 0).unwrap();
        assert!(m.predict_proba(x.view()).unwrap().iter().all(|p| (p - prev).abs() < 1e-12));
    }

    #[test]
    fn xor_is_learned_at_depth_two() {
        let base = [[0.0, 0.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            for r in &base {
                data.extend_from_slice(&r[..2]);
                y.push(r[2] as u8);
            }
        }
        let x = Array2::from_shape_vec((200, 2), data).unwrap();
        let params = GbdtParams { n_rounds: 100, max_depth: 2, ..Default::default() };
        let m = Gbdt::fit(x.view(), &y, &params, 0).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.iter().zip(&y).all(|(p, y)| (*p >= 0.5) == (*y == 1)));
    }

    #[test]
    fn full_sample_loss_never_increases() {
        let (x, y) = noisy(400, 2);
        let m = Gbdt::fit(x.view(), &y, &GbdtParams { n_rounds: 60, ..Default::default() }, 0).unwrap();
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn subsampling_is_seeded() {
        let (x, y) = noisy(200, 3);
        let params = GbdtParams { n_rounds: 20, subsample: 0.7, colsample: 0.5, ..Default::default() };
        let a = Gbdt::fit(x.view(), &y, &params, 4).unwrap();
        let b = Gbdt::fit(x.view(), &y, &params, 4).unwrap();
        let c = Gbdt::fit(x.view(), &y, &params, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
