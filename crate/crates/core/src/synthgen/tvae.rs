//! Tabular variational autoencoder. Numeric columns are standardized and
//! reconstructed under a unit-variance Gaussian; categorical columns are
//! one-hot encoded and reconstructed through a softmax.

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{Activation, Mlp};
use crate::data::{ColumnKind, ColumnSchema};
use crate::error::{Error, Result};
use crate::models::kan::Adam;
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvaeParams {
    pub latent_dim: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TvaeParams {
    fn default() -> Self {
        TvaeParams {
            latent_dim: 8,
            hidden_width: 64,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl TvaeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.latent_dim > 0
            && self.hidden_width > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid TVAE parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Numeric { at: usize, mean: f64, std: f64 },
    Categorical { at: usize, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tvae {
    slots: Vec<Slot>,
    width: usize,
    latent_dim: usize,
    encoder: Mlp,
    decoder: Mlp,
    /// Mean negative ELBO per epoch.
    pub epoch_loss: Vec<f64>,
}

impl Tvae {
    pub fn init(schema: &[ColumnSchema], columns: &[Vec<f64>], params: &TvaeParams, seed: u64) -> Result<Tvae> {
        if params.latent_dim == 0
            || params.hidden_width == 0
            || params.batch_size == 0
            || !(params.learning_rate > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid TVAE parameters {params:?}")));
        }
        let mut slots = Vec::with_capacity(schema.len());
        let mut width = 0;
        for (c, values) in schema.iter().zip(columns) {
            match c.kind {
                ColumnKind::Numeric => {
                    let n = values.len().max(1) as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    slots.push(Slot::Numeric {
                        at: width,
                        mean,
                        std: if std > 0.0 { std } else { 1.0 },
                    });
                    width += 1;
                }
                ColumnKind::Categorical => {
                    slots.push(Slot::Categorical {
                        at: width,
                        k: c.categories.len(),
                    });
                    width += c.categories.len();
                }
            }
        }
        let mut r = rng::derived_rng(seed, &[rng::tag("tvae_init")]);
        let h = params.hidden_width;
        let l = params.latent_dim;
        Ok(Tvae {
            encoder: Mlp::new(&[width, h, h, 2 * l], Activation::Tanh, &mut r),
            decoder: Mlp::new(&[l, h, h, width], Activation::Tanh, &mut r),
            slots,
            width,
            latent_dim: l,
            epoch_loss: Vec::new(),
        })
    }

    pub fn fit(schema: &[ColumnSchema], columns: &[Vec<f64>], params: &TvaeParams, seed: u64) -> Result<Tvae> {
        let n = columns.first().map_or(0, Vec::len);
        if n < 50 {
            return Err(Error::InvalidArgument(format!("TVAE needs at least 50 rows, got {n}")));
        }
        params.validate()?;
        let mut vae = Tvae::init(schema, columns, params, seed)?;
        let x = vae.encode_rows(columns);
        let mut r = rng::derived_rng(seed, &[rng::tag("tvae_train")]);
        let mut p = vae.params();
        let mut adam = Adam::new(p.len(), params.learning_rate);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut r);
            let mut total = 0.0;
            for batch in order.chunks(params.batch_size) {
                let xb = x.select(Axis(0), batch);
                let eps = Array2::from_shape_fn((batch.len(), vae.latent_dim), |_| StandardNormal.sample(&mut r));
                let (loss, grad) = vae.loss_and_gradient(&xb, &eps);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged(format!("TVAE loss {loss} at epoch {epoch}")));
                }
                total += loss * batch.len() as f64;
                adam.step(&mut p, &grad);
                vae.set_params(&p);
            }
            vae.epoch_loss.push(total / n as f64);
        }
        Ok(vae)
    }

    /// Standardized numerics and one-hot categoricals, one row per record.
    pub fn encode_rows(&self, columns: &[Vec<f64>]) -> Array2<f64> {
        let n = columns.first().map_or(0, Vec::len);
        let mut x = Array2::zeros((n, self.width));
        for (slot, values) in self.slots.iter().zip(columns) {
            for (i, &v) in values.iter().enumerate() {
                match *slot {
                    Slot::Numeric { at, mean, std } => x[[i, at]] = (v - mean) / std,
                    Slot::Categorical { at, .. } => x[[i, at + v as usize]] = 1.0,
                }
            }
        }
        x
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        self.encoder.write_params(&mut p);
        self.decoder.write_params(&mut p);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let used = self.encoder.read_params(p);
        self.decoder.read_params(&p[used..]);
    }

    /// Mean negative ELBO of a batch for fixed reparameterization noise
    /// `eps`, with its gradient in [`Tvae::params`] order.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, eps: &Array2<f64>) -> (f64, Vec<f64>) {
        let b = x.nrows() as f64;
        let l = self.latent_dim;
        let (enc, enc_cache) = self.encoder.forward(x);
        let mu = enc.slice(s![.., ..l]).to_owned();
        let logvar = enc.slice(s![.., l..]).to_owned();
        let sigma = logvar.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&sigma * eps);
        let (out, dec_cache) = self.decoder.forward(&z);
        let (recon, dout) = self.reconstruction(x, &out);
        let kl: f64 = mu
            .iter()
            .zip(&logvar)
            .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
            .sum();
        let loss = (recon + kl) / b;
        let (dec_grads, dz) = self.decoder.backward(&dec_cache, dout / b);
        let dmu = &dz + &(&mu / b);
        let dlogvar = &dz * eps * &sigma * 0.5 + &logvar.mapv(|v| 0.5 * (v.exp() - 1.0) / b);
        let mut denc = Array2::zeros(enc.raw_dim());
        denc.slice_mut(s![.., ..l]).assign(&dmu);
        denc.slice_mut(s![.., l..]).assign(&dlogvar);
        let (enc_grads, _) = self.encoder.backward(&enc_cache, denc);
        let mut grad = Vec::with_capacity(self.n_params());
        enc_grads.flatten_into(&mut grad);
        dec_grads.flatten_into(&mut grad);
        (loss, grad)
    }

    pub fn loss(&self, x: &Array2<f64>, eps: &Array2<f64>) -> f64 {
        self.loss_and_gradient(x, eps).0
    }

    /// Summed reconstruction loss and its gradient with respect to the
    /// decoder output.
    fn reconstruction(&self, x: &Array2<f64>, out: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut loss = 0.0;
        let mut d = Array2::zeros(out.raw_dim());
        for i in 0..x.nrows() {
            for slot in &self.slots {
                match *slot {
                    Slot::Numeric { at, .. } => {
                        let diff = out[[i, at]] - x[[i, at]];
                        loss += 0.5 * diff * diff;
                        d[[i, at]] = diff;
                    }
                    Slot::Categorical { at, k } => {
                        let logits = out.slice(s![i, at..at + k]);
                        let m = logits.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                        let sum: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                        let lse = m + sum.ln();
                        for j in 0..k {
                            let p = (logits[j] - lse).exp();
                            loss -= x[[i, at + j]] * (logits[j] - lse);
                            d[[i, at + j]] = p - x[[i, at + j]];
                        }
                    }
                }
            }
        }
        (loss, d)
    }

    /// Decodes standard-normal latent draws. Numerics take the decoded mean;
    /// categoricals are drawn from the decoded softmax.
    pub fn sample(&self, n: usize, r: &mut Rng) -> Vec<Vec<f64>> {
        let z = Array2::from_shape_fn((n, self.latent_dim), |_| StandardNormal.sample(r));
        let out = self.decoder.predict(&z);
        let mut cols = vec![Vec::with_capacity(n); self.slots.len()];
        for i in 0..n {
            for (c, slot) in self.slots.iter().enumerate() {
                let v = match *slot {
                    Slot::Numeric { at, mean, std } => out[[i, at]] * std + mean,
                    Slot::Categorical { at, k } => {
                        let logits = out.slice(s![i, at..at + k]);
                        let m = logits.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                        let w: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                        let total: f64 = w.iter().sum();
                        let mut u = r.random::<f64>() * total;
                        let mut pick = k - 1;
                        for (j, wj) in w.iter().enumerate() {
                            if u < *wj {
                                pick = j;
                                break;
                            }
                            u -= wj;
                        }
                        pick as f64
                    }
                };
                cols[c].push(v);
            }
        }
        cols
    }
}
