//! Small dense feedforward network with tanh hidden layers and a linear
//! output layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of every layer; the last entry is the network output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }
}

impl Mlp {
    /// Xavier-normal weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let std = (2.0 / (i + o) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer { inputs: w[0], outputs: w[1], weights: vec![0.0; w[0] * w[1]], bias: vec![0.0; w[1]] })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut activations = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let a = activations.last().expect("nonempty");
            let mut z = l.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                *zo += row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
            }
            if li != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.activations.pop().expect("output"))
    }

    /// Gradient of `grad_out . output` with respect to every parameter, in
    /// the same layout as [`Mlp::params`].
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: grad_out.len() });
        }
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate().rev() {
            let out = &cache.activations[li + 1];
            if li != last {
                for (d, a) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.activations[li];
            let mut g = vec![0.0; l.weights.len() + l.bias.len()];
            for o in 0..l.outputs {
                let d = delta[o];
                if d != 0.0 {
                    for (gw, x) in g[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                        *gw = d * x;
                    }
                }
                g[l.weights.len() + o] = d;
            }
            if li > 0 {
                let mut prev = vec![0.0; l.inputs];
                for o in 0..l.outputs {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                delta = prev;
            }
            grads.push(g);
        }
        grads.reverse();
        Ok(grads.concat())
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: p.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// `self = (1 - rate) * self + rate * other`.
    pub fn soft_update_from(&mut self, other: &Mlp, rate: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x = (1.0 - rate) * *x + rate * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x = (1.0 - rate) * *x + rate * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}
