//! Small dense networks with manual backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs × outputs`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs and activated outputs from a forward pass.
pub struct Cache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. Hidden layers use `hidden`, the
    /// last layer is linear.
    pub fn new(sizes: &[usize], hidden: Activation, r: &mut Rng) -> Mlp {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((fan_in, fan_out), |_| (r.random::<f64>() * 2.0 - 1.0) * limit),
                    b: Array1::zeros(fan_out),
                    act: if i + 2 == sizes.len() { Activation::Identity } else { hidden },
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.dot(&l.w) + &l.b;
            if l.act == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            outputs.push(z.clone());
            h = z;
        }
        (h, Cache { inputs, outputs })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    /// Gradients of the parameters and of the input, given the gradient of
    /// the loss with respect to the network output.
    pub fn backward(&self, cache: &Cache, dout: Array2<f64>) -> (Gradients, Array2<f64>) {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut d = dout;
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.act == Activation::Tanh {
                d.zip_mut_with(&cache.outputs[i], |g, &y| *g *= 1.0 - y * y);
            }
            gw.push(cache.inputs[i].t().dot(&d));
            gb.push(d.sum_axis(Axis(0)));
            d = d.dot(&l.w.t());
        }
        gw.reverse();
        gb.reverse();
        (Gradients { w: gw, b: gb }, d)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
    }

    /// Reads parameters in [`Mlp::write_params`] order; returns the count
    /// consumed.
    pub fn read_params(&mut self, p: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = p[at];
                at += 1;
            }
        }
        at
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::rng(3);
        let mut net = Mlp::new(&[3, 5, 4, 2], Activation::Tanh, &mut r);
        let x = Array2::from_shape_fn((4, 3), |_| r.random::<f64>() - 0.5);
        let target = Array2::from_shape_fn((4, 2), |_| r.random::<f64>());
        let loss = |net: &Mlp| 0.5 * (net.predict(&x) - &target).mapv(|v| v * v).sum();
        let (out, cache) = net.forward(&x);
        let (g, _) = net.backward(&cache, out - &target);
        let mut flat = Vec::new();
        g.flatten_into(&mut flat);
        let mut p = Vec::new();
        net.write_params(&mut p);
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += 1e-6;
            net.read_params(&q);
            let up = loss(&net);
            q[i] -= 2e-6;
            net.read_params(&q);
            let down = loss(&net);
            assert!(((up - down) / 2e-6 - flat[i]).abs() < 1e-6);
        }
    }
}
