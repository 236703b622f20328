//! Gaussian copula over empirical marginals.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ColumnKind, ColumnSchema};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    /// Sorted training values; sampled through the step inverse ECDF.
    Numeric { sorted: Vec<f64> },
    /// Cumulative category frequencies; category `k` owns latent interval
    /// `[cum[k-1], cum[k])`.
    Categorical { cum: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Copula {
    pub marginals: Vec<Marginal>,
    /// Correlation of the normal scores after regularization.
    pub correlation: Vec<f64>,
    chol: Vec<f64>,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Average ranks (1-based) of `values`.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson_matrix(scores: &[Vec<f64>]) -> Vec<f64> {
    let d = scores.len();
    let n = scores.first().map_or(0, Vec::len) as f64;
    let centered: Vec<(Vec<f64>, f64)> = scores
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / n;
            let c: Vec<f64> = s.iter().map(|v| v - m).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect();
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        r[i * d + i] = 1.0;
        for j in 0..i {
            let (ci, ni) = &centered[i];
            let (cj, nj) = &centered[j];
            let v = if *ni > 1e-12 && *nj > 1e-12 {
                ci.iter().zip(cj).map(|(a, b)| a * b).sum::<f64>() / (ni * nj)
            } else {
                0.0
            };
            r[i * d + j] = v;
            r[j * d + i] = v;
        }
    }
    r
}

impl Copula {
    pub fn fit(schema: &[ColumnSchema], columns: &[Vec<f64>]) -> Result<Copula> {
        let n = columns.first().map_or(0, Vec::len);
        if n < 5 {
            return Err(Error::InvalidArgument(format!("copula needs at least 5 rows, got {n}")));
        }
        let normal = std_normal();
        let mut marginals = Vec::with_capacity(schema.len());
        let mut scores = Vec::with_capacity(schema.len());
        for (c, values) in schema.iter().zip(columns) {
            match c.kind {
                ColumnKind::Numeric => {
                    let mut sorted = values.clone();
                    sorted.sort_by(f64::total_cmp);
                    let ranks = average_ranks(values);
                    scores.push(ranks.iter().map(|r| normal.inverse_cdf((r - 0.5) / n as f64)).collect());
                    marginals.push(Marginal::Numeric { sorted });
                }
                ColumnKind::Categorical => {
                    let k = c.categories.len();
                    let mut counts = vec![0.0; k];
                    for &v in values {
                        counts[v as usize] += 1.0;
                    }
                    let mut cum = Vec::with_capacity(k);
                    let mut acc = 0.0;
                    for cnt in &counts {
                        acc += cnt / n as f64;
                        cum.push(acc);
                    }
                    *cum.last_mut().expect("at least one category") = 1.0;
                    let mid: Vec<f64> = (0..k)
                        .map(|j| {
                            let lo = if j == 0 { 0.0 } else { cum[j - 1] };
                            normal.inverse_cdf((0.5 * (lo + cum[j])).clamp(1e-12, 1.0 - 1e-12))
                        })
                        .collect();
                    scores.push(values.iter().map(|&v| mid[v as usize]).collect());
                    marginals.push(Marginal::Categorical { cum });
                }
            }
        }
        let d = schema.len();
        let raw = pearson_matrix(&scores);
        let mut alpha = 0.0;
        let (correlation, chol) = loop {
            let r: Vec<f64> = raw
                .iter()
                .enumerate()
                .map(|(i, &v)| if i / d == i % d { 1.0 } else { (1.0 - alpha) * v })
                .collect();
            if let Some(l) = cholesky(&r, d) {
                if l.iter().step_by(d + 1).all(|&v| v > 1e-6) || d == 0 {
                    break (r, l);
                }
            }
            alpha = if alpha == 0.0 { 1e-3 } else { (alpha * 2.0).min(1.0) };
        };
        Ok(Copula {
            marginals,
            correlation,
            chol,
        })
    }

    /// Column-major draws: `out[j][i]` is column `j` of row `i`.
    pub fn sample(&self, n: usize, r: &mut Rng) -> Vec<Vec<f64>> {
        let d = self.marginals.len();
        let normal = std_normal();
        let mut out = vec![Vec::with_capacity(n); d];
        let mut e = vec![0.0; d];
        for _ in 0..n {
            for v in e.iter_mut() {
                *v = StandardNormal.sample(r);
            }
            for j in 0..d {
                let z: f64 = (0..=j).map(|k| self.chol[j * d + k] * e[k]).sum();
                let u = normal.cdf(z);
                let v = match &self.marginals[j] {
                    Marginal::Numeric { sorted } => {
                        let idx = ((u * sorted.len() as f64) as usize).min(sorted.len() - 1);
                        sorted[idx]
                    }
                    Marginal::Categorical { cum } => cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1) as f64,
                };
                out[j].push(v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ks(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        pearson_matrix(&[a.to_vec(), b.to_vec()])[1]
    }

    #[test]
    fn reproduces_single_marginal() {
        let mut r = rng::rng(1);
        let src: Vec<f64> = (0..500).map(|_| rand_distr::Exp::new(1.0).unwrap().sample(&mut r)).collect();
        let c = Copula::fit(&[ColumnSchema::numeric("x")], &[src.clone()]).unwrap();
        let s = c.sample(10_000, &mut rng::rng(2));
        assert!(ks(&s[0], &src) < 0.05);
    }

    #[test]
    fn recovers_correlation() {
        let mut r = rng::rng(3);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for _ in 0..2000 {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            x.push(a);
            y.push(0.8 * a + 0.6 * b);
        }
        let schema = [ColumnSchema::numeric("x"), ColumnSchema::numeric("y")];
        let c = Copula::fit(&schema, &[x, y]).unwrap();
        let s = c.sample(10_000, &mut rng::rng(4));
        assert!((corr(&s[0], &s[1]) - 0.8).abs() < 0.05);
    }

    #[test]
    fn single_level_category_is_constant() {
        let schema = [ColumnSchema::categorical("c", ["only"]), ColumnSchema::numeric("x")];
        let cols = vec![vec![0.0; 10], (0..10).map(f64::from).collect()];
        let c = Copula::fit(&schema, &cols).unwrap();
        assert!(c.sample(500, &mut rng::rng(5))[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_correlation_gives_independent_marginals() {
        let mut r = rng::rng(6);
        let x: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = (0..400).map(|_| rand_distr::Exp::new(2.0).unwrap().sample(&mut r)).collect();
        let schema = [ColumnSchema::numeric("x"), ColumnSchema::numeric("y")];
        let mut c = Copula::fit(&schema, &[x.clone(), y.clone()]).unwrap();
        c.chol = vec![1.0, 0.0, 0.0, 1.0];
        let s = c.sample(10_000, &mut rng::rng(7));
        assert!(ks(&s[0], &x) < 0.05);
        assert!(ks(&s[1], &y) < 0.05);
        assert!(corr(&s[0], &s[1]).abs() < 0.05);
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(Copula::fit(&[ColumnSchema::numeric("x")], &[vec![1.0]]).is_err());
    }
}
