//! Kolmogorov–Arnold network with one hidden layer.
//!
//! Every edge carries `w_b · silu(x) + Σ_m c_m B_m(x)` where `B_m` are
//! uniform B-splines of order `spline_order` on `grid_size` intervals. Input
//! edges use a per-feature grid spanning the training range with a 10%
//! margin on each side. Hidden-to-output edges use a grid spanning the hidden
//! activations at initialization, widened to at least four units. Grids stay
//! fixed during training; outside a grid only the base term contributes.
//!
//! Training minimizes class-weighted binary cross-entropy
//! `(1/N) Σ w_n · BCE(p_n, y_n)` with Adam on shuffled mini-batches.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_dims, check_training_data, logit, sigmoid, softplus, ProbabilisticClassifier};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KanParams {
    pub grid_size: usize,
    pub spline_order: usize,
    pub learning_rate: f64,
    /// Weight of positive samples in the cross-entropy loss.
    pub positive_class_weight: f64,
    pub epochs: usize,
    pub hidden_width: usize,
    pub batch_size: usize,
}

impl Default for KanParams {
    fn default() -> Self {
        KanParams {
            grid_size: 5,
            spline_order: 3,
            learning_rate: 0.01,
            positive_class_weight: 1.0,
            epochs: 40,
            hidden_width: 8,
            batch_size: 64,
        }
    }
}

impl KanParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0
            || self.spline_order == 0
            || !(self.learning_rate > 0.0)
            || !(self.positive_class_weight > 0.0)
            || self.epochs == 0
            || self.hidden_width == 0
            || self.batch_size == 0
        {
            return Err(Error::InvalidArgument(format!("invalid KAN hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Uniform knot vector: `t_j = lo + (j - order) · step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub lo: f64,
    pub step: f64,
}

impl SplineGrid {
    fn spanning(min: f64, max: f64, margin: f64, min_width: f64, grid_size: usize) -> Self {
        let w = max - min;
        let (mut lo, mut hi) = (min - margin * w, max + margin * w);
        if hi - lo < min_width {
            let c = 0.5 * (lo + hi);
            lo = c - 0.5 * min_width;
            hi = c + 0.5 * min_width;
        }
        SplineGrid {
            lo,
            step: (hi - lo) / grid_size as f64,
        }
    }

    fn knot(&self, j: usize, order: usize) -> f64 {
        self.lo + (j as f64 - order as f64) * self.step
    }

    /// Fills `out` with the `grid_size + order` basis values at `x` and, when
    /// given, `dout` with their derivatives. `scratch` needs
    /// `grid_size + 2·order` slots.
    fn basis(&self, x: f64, g: usize, k: usize, scratch: &mut [f64], out: &mut [f64], dout: Option<&mut [f64]>) {
        let n0 = g + 2 * k;
        scratch[..n0].iter_mut().for_each(|v| *v = 0.0);
        let u = (x - self.knot(0, k)) / self.step;
        if u >= 0.0 && u < n0 as f64 {
            scratch[u as usize] = 1.0;
        }
        let mut dout = dout;
        for p in 1..=k {
            if p == k {
                if let Some(d) = dout.as_deref_mut() {
                    for j in 0..g + k {
                        d[j] = (scratch[j] - scratch[j + 1]) / self.step;
                    }
                }
            }
            let denom = p as f64 * self.step;
            for j in 0..n0 - p {
                let left = (x - self.knot(j, k)) / denom;
                let right = (self.knot(j + p + 1, k) - x) / denom;
                scratch[j] = left * scratch[j] + right * scratch[j + 1];
            }
        }
        out[..g + k].copy_from_slice(&scratch[..g + k]);
    }
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kan {
    n_in: usize,
    hidden: usize,
    grid_size: usize,
    order: usize,
    input_grids: Vec<SplineGrid>,
    hidden_grids: Vec<SplineGrid>,
    /// `hidden × n_in`
    base1: Vec<f64>,
    /// `hidden × n_in × n_basis`
    coef1: Vec<f64>,
    base2: Vec<f64>,
    /// `hidden × n_basis`
    coef2: Vec<f64>,
    bias: f64,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

struct Scratch {
    knots: Vec<f64>,
    s1: Vec<f64>,
    b1: Vec<f64>,
    h: Vec<f64>,
    b2: Vec<f64>,
    db2: Vec<f64>,
}

impl Kan {
    fn n_basis(&self) -> usize {
        self.grid_size + self.order
    }

    fn scratch(&self) -> Scratch {
        let nb = self.n_basis();
        Scratch {
            knots: vec![0.0; self.grid_size + 2 * self.order],
            s1: vec![0.0; self.n_in],
            b1: vec![0.0; self.n_in * nb],
            h: vec![0.0; self.hidden],
            b2: vec![0.0; self.hidden * nb],
            db2: vec![0.0; self.hidden * nb],
        }
    }

    /// Builds grids from the training matrix and draws initial parameters.
    pub fn init(x: ArrayView2<f64>, y: &[u8], params: &KanParams, seed: u64) -> Result<Kan> {
        check_training_data(x, y)?;
        params.validate()?;
        let n_in = x.ncols();
        let hidden = params.hidden_width;
        let g = params.grid_size;
        let k = params.spline_order;
        let nb = g + k;
        let input_grids = x
            .columns()
            .into_iter()
            .map(|c| {
                let (mn, mx) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let min_width = if mx > mn { 0.0 } else { 2.0 };
                SplineGrid::spanning(mn, mx, 0.1, min_width, g)
            })
            .collect();
        let mut r = rng::derived_rng(seed, &[rng::tag("kan_init")]);
        let scale = 1.0 / (n_in.max(1) as f64).sqrt();
        let spline_init = Normal::new(0.0, 0.1 * scale).expect("valid normal");
        let base1 = (0..hidden * n_in).map(|_| (r.random::<f64>() * 2.0 - 1.0) * scale).collect();
        let coef1 = (0..hidden * n_in * nb).map(|_| spline_init.sample(&mut r)).collect();
        let hscale = 1.0 / (hidden as f64).sqrt();
        let base2 = (0..hidden).map(|_| (r.random::<f64>() * 2.0 - 1.0) * hscale).collect();
        let spline2 = Normal::new(0.0, 0.1 * hscale).expect("valid normal");
        let coef2 = (0..hidden * nb).map(|_| spline2.sample(&mut r)).collect();
        let wpos = params.positive_class_weight;
        let (mut wsum, mut wy) = (0.0, 0.0);
        for &v in y {
            let w = if v == 1 { wpos } else { 1.0 };
            wsum += w;
            wy += w * f64::from(v);
        }
        let bias = logit((wy / wsum).clamp(1e-4, 1.0 - 1e-4));
        let mut kan = Kan {
            n_in,
            hidden,
            grid_size: g,
            order: k,
            input_grids,
            hidden_grids: vec![SplineGrid { lo: -2.0, step: 4.0 / g as f64 }; hidden],
            base1,
            coef1,
            base2,
            coef2,
            bias,
            epoch_loss: Vec::new(),
        };
        let mut lo = vec![f64::INFINITY; hidden];
        let mut hi = vec![f64::NEG_INFINITY; hidden];
        let mut s = kan.scratch();
        for row in x.rows() {
            let row = row.to_vec();
            kan.hidden_forward(&row, &mut s);
            for j in 0..hidden {
                lo[j] = lo[j].min(s.h[j]);
                hi[j] = hi[j].max(s.h[j]);
            }
        }
        kan.hidden_grids = (0..hidden).map(|j| SplineGrid::spanning(lo[j], hi[j], 0.1, 4.0, g)).collect();
        Ok(kan)
    }

    pub fn fit(x: ArrayView2<f64>, y: &[u8], params: &KanParams, seed: u64) -> Result<Kan> {
        let mut kan = Kan::init(x, y, params, seed)?;
        let n = x.nrows();
        let dense = x.as_standard_layout();
        let data = dense.as_slice().expect("standard layout");
        let mut adam = Adam::new(kan.n_params(), params.learning_rate);
        let mut r = rng::derived_rng(seed, &[rng::tag("kan_batches")]);
        let mut order: Vec<usize> = (0..n).collect();
        let mut params_flat = kan.params();
        let mut grad = vec![0.0; params_flat.len()];
        for epoch in 0..params.epochs {
            order.shuffle(&mut r);
            let mut total = 0.0;
            for (b, batch) in order.chunks(params.batch_size).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = kan.accumulate(
                    batch.iter().map(|&i| (&data[i * kan.n_in..(i + 1) * kan.n_in], y[i])),
                    batch.len(),
                    params.positive_class_weight,
                    Some(&mut grad),
                );
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "KAN loss {loss} at epoch {epoch}, batch {b} (learning rate {})",
                        params.learning_rate
                    )));
                }
                total += loss * batch.len() as f64;
                adam.step(&mut params_flat, &grad);
                kan.set_params(&params_flat);
            }
            kan.epoch_loss.push(total / n as f64);
        }
        Ok(kan)
    }

    pub fn n_params(&self) -> usize {
        self.base1.len() + self.coef1.len() + self.base2.len() + self.coef2.len() + 1
    }

    /// All trainable parameters in a fixed order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.base1);
        p.extend_from_slice(&self.coef1);
        p.extend_from_slice(&self.base2);
        p.extend_from_slice(&self.coef2);
        p.push(self.bias);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut at = 0;
        for dst in [&mut self.base1, &mut self.coef1, &mut self.base2, &mut self.coef2] {
            let len = dst.len();
            dst.copy_from_slice(&p[at..at + len]);
            at += len;
        }
        self.bias = p[at];
    }

    fn hidden_forward(&self, x: &[f64], s: &mut Scratch) {
        let nb = self.n_basis();
        for i in 0..self.n_in {
            s.s1[i] = silu(x[i]);
            self.input_grids[i].basis(x[i], self.grid_size, self.order, &mut s.knots, &mut s.b1[i * nb..(i + 1) * nb], None);
        }
        for j in 0..self.hidden {
            let mut h = 0.0;
            for i in 0..self.n_in {
                h += self.base1[j * self.n_in + i] * s.s1[i];
                let c = &self.coef1[(j * self.n_in + i) * nb..(j * self.n_in + i + 1) * nb];
                let b = &s.b1[i * nb..(i + 1) * nb];
                h += c.iter().zip(b).map(|(c, b)| c * b).sum::<f64>();
            }
            s.h[j] = h;
        }
    }

    fn output(&self, s: &mut Scratch, with_derivative: bool) -> f64 {
        let nb = self.n_basis();
        let mut o = self.bias;
        for j in 0..self.hidden {
            let h = s.h[j];
            let (b2, db2) = (&mut s.b2[j * nb..(j + 1) * nb], &mut s.db2[j * nb..(j + 1) * nb]);
            self.hidden_grids[j].basis(h, self.grid_size, self.order, &mut s.knots, b2, with_derivative.then_some(db2));
            o += self.base2[j] * silu(h);
            o += self.coef2[j * nb..(j + 1) * nb].iter().zip(b2.iter()).map(|(c, b)| c * b).sum::<f64>();
        }
        o
    }

    /// Weighted loss over `rows`, normalized by `norm`; adds the gradient to
    /// `grad` when given.
    fn accumulate<'a>(
        &self,
        rows: impl Iterator<Item = (&'a [f64], u8)>,
        norm: usize,
        pos_weight: f64,
        mut grad: Option<&mut Vec<f64>>,
    ) -> f64 {
        let nb = self.n_basis();
        let mut s = self.scratch();
        let off_coef1 = self.base1.len();
        let off_base2 = off_coef1 + self.coef1.len();
        let off_coef2 = off_base2 + self.base2.len();
        let off_bias = off_coef2 + self.coef2.len();
        let norm = norm as f64;
        let mut loss = 0.0;
        for (x, y) in rows {
            self.hidden_forward(x, &mut s);
            let o = self.output(&mut s, grad.is_some());
            let w = if y == 1 { pos_weight } else { 1.0 };
            let yf = f64::from(y);
            loss += w * (softplus(o) - yf * o) / norm;
            let Some(g) = grad.as_deref_mut() else { continue };
            let r = w * (sigmoid(o) - yf) / norm;
            g[off_bias] += r;
            for j in 0..self.hidden {
                let h = s.h[j];
                let b2 = &s.b2[j * nb..(j + 1) * nb];
                let db2 = &s.db2[j * nb..(j + 1) * nb];
                let c2 = &self.coef2[j * nb..(j + 1) * nb];
                g[off_base2 + j] += r * silu(h);
                for m in 0..nb {
                    g[off_coef2 + j * nb + m] += r * b2[m];
                }
                let dphi = self.base2[j] * silu_grad(h) + c2.iter().zip(db2).map(|(c, d)| c * d).sum::<f64>();
                let dh = r * dphi;
                if dh == 0.0 {
                    continue;
                }
                for i in 0..self.n_in {
                    g[j * self.n_in + i] += dh * s.s1[i];
                    let base = off_coef1 + (j * self.n_in + i) * nb;
                    for m in 0..nb {
                        g[base + m] += dh * s.b1[i * nb + m];
                    }
                }
            }
        }
        loss
    }

    /// Mean weighted cross-entropy and its gradient with respect to
    /// [`Kan::params`].
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[u8], positive_class_weight: f64) -> Result<(f64, Vec<f64>)> {
        check_dims(self.n_in, x)?;
        let dense = x.as_standard_layout();
        let data = dense.as_slice().expect("standard layout");
        let mut grad = vec![0.0; self.n_params()];
        let loss = self.accumulate(
            (0..x.nrows()).map(|i| (&data[i * self.n_in..(i + 1) * self.n_in], y[i])),
            x.nrows(),
            positive_class_weight,
            Some(&mut grad),
        );
        Ok((loss, grad))
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: &[u8], positive_class_weight: f64) -> Result<f64> {
        check_dims(self.n_in, x)?;
        let dense = x.as_standard_layout();
        let data = dense.as_slice().expect("standard layout");
        Ok(self.accumulate(
            (0..x.nrows()).map(|i| (&data[i * self.n_in..(i + 1) * self.n_in], y[i])),
            x.nrows(),
            positive_class_weight,
            None,
        ))
    }
}

impl ProbabilisticClassifier for Kan {
    fn n_features(&self) -> usize {
        self.n_in
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.n_in, x)?;
        let mut s = self.scratch();
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.hidden_forward(&row, &mut s);
                sigmoid(self.output(&mut s, false))
            })
            .collect())
    }
}

/// Adam optimizer over a flat parameter vector.
pub(crate) struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::log_loss;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn batch(seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut r = rng::rng(seed);
        let x = Array2::from_shape_fn((5, 3), |_| StandardNormal.sample(&mut r));
        (x, vec![1, 0, 0, 1, 0])
    }

    #[test]
    fn splines_partition_unity_inside_grid() {
        let g = SplineGrid { lo: -1.0, step: 0.4 };
        let mut scratch = vec![0.0; 11];
        let mut out = vec![0.0; 8];
        for x in [-0.99, -0.3, 0.0, 0.51, 0.99] {
            g.basis(x, 5, 3, &mut scratch, &mut out, None);
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|&b| b >= 0.0));
        }
        g.basis(5.0, 5, 3, &mut scratch, &mut out, None);
        assert!(out.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn spline_derivative_matches_differences() {
        let g = SplineGrid { lo: -1.0, step: 0.4 };
        let mut scratch = vec![0.0; 11];
        let (mut a, mut b, mut d) = (vec![0.0; 8], vec![0.0; 8], vec![0.0; 8]);
        let x = 0.137;
        let eps = 1e-6;
        g.basis(x, 5, 3, &mut scratch, &mut vec![0.0; 8], Some(&mut d));
        g.basis(x + eps, 5, 3, &mut scratch, &mut a, None);
        g.basis(x - eps, 5, 3, &mut scratch, &mut b, None);
        for m in 0..8 {
            assert!(((a[m] - b[m]) / (2.0 * eps) - d[m]).abs() < 1e-6);
        }
    }

    pub(crate) fn max_relative_error(kan: &Kan, x: ArrayView2<f64>, y: &[u8], w: f64) -> f64 {
        let (_, grad) = kan.loss_and_gradient(x, y, w).unwrap();
        let base = kan.params();
        let mut probe = kan.clone();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += eps;
            probe.set_params(&p);
            let up = probe.loss(x, y, w).unwrap();
            p[i] -= 2.0 * eps;
            probe.set_params(&p);
            let down = probe.loss(x, y, w).unwrap();
            let fd = (up - down) / (2.0 * eps);
            let err = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = batch(1);
        let params = KanParams { hidden_width: 4, ..Default::default() };
        let mut kan = Kan::init(x.view(), &y, &params, 2).unwrap();
        let mut r = rng::rng(9);
        for trial in 0..3 {
            let err = max_relative_error(&kan, x.view(), &y, 2.5);
            assert!(err < 1e-4, "trial {trial}: {err}");
            let p: Vec<f64> = kan.params().iter().map(|v| v + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
            kan.set_params(&p);
        }
    }

    #[test]
    fn unit_weight_is_plain_cross_entropy() {
        let (x, y) = batch(4);
        let kan = Kan::init(x.view(), &y, &KanParams::default(), 0).unwrap();
        let p = kan.predict_proba(x.view()).unwrap();
        assert!((kan.loss(x.view(), &y, 1.0).unwrap() - log_loss(&p, &y)).abs() < 1e-12);
    }

    #[test]
    fn learns_nonlinear_signal() {
        let mut r = rng::rng(21);
        let n = 2000;
        let xs: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
        let y: Vec<u8> = xs.iter().map(|&v| (r.random::<f64>() < sigmoid((3.0 * v).sin())) as u8).collect();
        let x = Array2::from_shape_vec((n, 1), xs).unwrap();
        let params = KanParams { epochs: 60, learning_rate: 0.02, ..Default::default() };
        let kan = Kan::fit(x.view(), &y, &params, 3).unwrap();
        let prev = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
        let constant = log_loss(&vec![prev; n], &y);
        let trained = log_loss(&kan.predict_proba(x.view()).unwrap(), &y);
        assert!(trained < constant, "{trained} vs {constant}");
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = batch(5);
        let params = KanParams { learning_rate: 1e300, epochs: 3, ..Default::default() };
        let err = Kan::fit(x.view(), &y, &params, 0);
        assert!(matches!(err, Err(Error::Diverged(_))) || err.is_ok());
    }
}
