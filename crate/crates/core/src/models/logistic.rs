use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_dims, check_training_data, sigmoid, softplus, ProbabilisticClassifier};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// L2 penalty on the coefficients (the intercept is not penalized).
    pub l2_strength: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2_strength: 1e-2,
            max_iters: 2000,
            tol: 1e-6,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0) || self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid logistic hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// L2-regularized logistic regression fitted by full-batch, diagonally
/// preconditioned gradient descent with a backtracking (Armijo) line search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

struct Objective<'a> {
    x: ArrayView2<'a, f64>,
    y: Vec<f64>,
    l2: f64,
}

impl Objective<'_> {
    fn loss(&self, b: f64, w: &Array1<f64>) -> f64 {
        let z = self.x.dot(w);
        let n = self.y.len() as f64;
        let data: f64 = z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| softplus(z + b) - y * (z + b))
            .sum::<f64>()
            / n;
        data + 0.5 * self.l2 * w.dot(w)
    }

    fn gradient(&self, b: f64, w: &Array1<f64>) -> (f64, Array1<f64>) {
        let n = self.y.len() as f64;
        let z = self.x.dot(w);
        let r: Array1<f64> = z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| (sigmoid(z + b) - y) / n)
            .collect();
        let gw = self.x.t().dot(&r) + &(w * self.l2);
        (r.sum(), gw)
    }
}

impl Logistic {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], params: &LogisticParams) -> Result<Logistic> {
        check_training_data(x, y)?;
        params.validate()?;
        let obj = Objective {
            x,
            y: y.iter().map(|&v| f64::from(v)).collect(),
            l2: params.l2_strength,
        };
        // Diagonal preconditioner from the curvature bound of each coordinate.
        let n = x.nrows() as f64;
        let dw: Array1<f64> = x
            .columns()
            .into_iter()
            .map(|c| 0.25 * c.dot(&c) / n + params.l2_strength)
            .map(|d| if d > 0.0 { d } else { 1.0 })
            .collect();
        let db = 0.25;
        let mut b = 0.0;
        let mut w = Array1::zeros(x.ncols());
        let mut step: f64 = 1.0;
        let mut loss = obj.loss(b, &w);
        let mut iterations = 0;
        let (mut gb, mut gw) = obj.gradient(b, &w);
        let mut gnorm = (gb * gb + gw.dot(&gw)).sqrt();
        while iterations < params.max_iters && gnorm >= params.tol {
            iterations += 1;
            let (pb, pw) = (gb / db, &gw / &dw);
            let decrease = gb * pb + gw.dot(&pw);
            step = (step * 2.0).min(1e4);
            loop {
                let nb = b - step * pb;
                let nw = &w - &(&pw * step);
                let nl = obj.loss(nb, &nw);
                if nl <= loss - 1e-4 * step * decrease {
                    b = nb;
                    w = nw;
                    loss = nl;
                    break;
                }
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
            if step < 1e-14 {
                break;
            }
            (gb, gw) = obj.gradient(b, &w);
            gnorm = (gb * gb + gw.dot(&gw)).sqrt();
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("logistic loss became {loss}")));
        }
        Ok(Logistic {
            intercept: b,
            coefficients: w.to_vec(),
            iterations,
            gradient_norm: gnorm,
        })
    }
}

impl ProbabilisticClassifier for Logistic {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.coefficients.len(), x)?;
        let w = Array1::from(self.coefficients.clone());
        Ok(x.dot(&w).iter().map(|z| sigmoid(z + self.intercept)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn intercept_only_recovers_prevalence() {
        let y: Vec<u8> = (0..100).map(|i| (i < 30) as u8).collect();
        let x = Array2::zeros((100, 0));
        let m = Logistic::fit(x.view(), &y, &LogisticParams::default()).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.iter().all(|v| (v - 0.3).abs() < 1e-5));
    }

    #[test]
    fn separable_data_gives_monotone_probabilities() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 / 10.0 - 2.0);
        let y: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let params = LogisticParams { l2_strength: 1e-4, max_iters: 500, tol: 1e-8 };
        let m = Logistic::fit(x.view(), &y, &params).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn heavy_penalty_shrinks_to_prevalence() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y: Vec<u8> = (0..50).map(|i| (i % 5 == 0) as u8).collect();
        let params = LogisticParams { l2_strength: 1e8, ..Default::default() };
        let m = Logistic::fit(x.view(), &y, &params).unwrap();
        assert!(m.coefficients.iter().all(|w| w.abs() < 1e-6));
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-4));
    }

    #[test]
    fn converges_to_small_gradient() {
        let x = Array2::from_shape_fn((200, 3), |(i, j)| (((i * 13 + j * 5) % 17) as f64 - 8.0) / 5.0);
        let y: Vec<u8> = (0..200).map(|i| ((i * 13) % 17 > 9) as u8).collect();
        let m = Logistic::fit(x.view(), &y, &LogisticParams::default()).unwrap();
        assert!(m.gradient_norm < 1e-6, "{}", m.gradient_norm);
    }
}
