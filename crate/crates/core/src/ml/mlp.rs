//! Fully connected network with tanh hidden layers and a linear output,
//! trained on mean squared error.
//!
//! All weights live in one flat vector. Layer `l` occupies
//! `W_l` (`out × in`, row-major) followed by `b_l` (`out`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

struct LayerView {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

fn layout(sizes: &[usize]) -> (Vec<LayerView>, usize) {
    let mut off = 0;
    let layers = sizes
        .windows(2)
        .map(|p| {
            let (n_in, n_out) = (p[0], p[1]);
            let w = off;
            let b = w + n_in * n_out;
            off = b + n_out;
            LayerView { n_in, n_out, w, b }
        })
        .collect();
    (layers, off)
}

impl Mlp {
    /// Xavier-uniform weights from `seed`, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Model(format!("invalid layer sizes {sizes:?}")));
        }
        let (layers, total) = layout(sizes);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &layers {
            let limit = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut params[l.w..l.b] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Model(format!("invalid layer sizes {sizes:?}")));
        }
        let (_, total) = layout(&sizes);
        if params.len() != total {
            return Err(Error::Model(format!(
                "layer sizes {sizes:?} need {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    /// Activations of every layer, input first.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (layers, _) = layout(&self.sizes);
        let mut acts = vec![x.to_vec()];
        let last = layers.len() - 1;
        for (li, l) in layers.iter().enumerate() {
            let input = &acts[li];
            let w = &self.params[l.w..l.b];
            let b = &self.params[l.b..l.b + l.n_out];
            let out: Vec<f64> = (0..l.n_out)
                .map(|j| {
                    let row = &w[j * l.n_in..(j + 1) * l.n_in];
                    let z = b[j] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                    if li == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Shape {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(self.forward_all(x).pop().expect("output layer"))
    }

    /// Adds this sample's gradient of `scale · Σ_k (ŷ_k − y_k)²` into `grad`
    /// and returns the unscaled squared error.
    fn backprop(&self, x: &[f64], y: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (layers, _) = layout(&self.sizes);
        let acts = self.forward_all(x);
        let out = acts.last().expect("output layer");
        let mut sq = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(y)
            .map(|(o, t)| {
                sq += (o - t).powi(2);
                2.0 * scale * (o - t)
            })
            .collect();
        for li in (0..layers.len()).rev() {
            let l = &layers[li];
            let input = &acts[li];
            for j in 0..l.n_out {
                let d = delta[j];
                grad[l.b + j] += d;
                let g = &mut grad[l.w + j * l.n_in..l.w + (j + 1) * l.n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if li > 0 {
                let w = &self.params[l.w..l.b];
                // input to this layer is a tanh output: derivative 1 − a²
                delta = (0..l.n_in)
                    .map(|i| {
                        let s: f64 = (0..l.n_out).map(|j| w[j * l.n_in + i] * delta[j]).sum();
                        s * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
        sq
    }

    /// Loss `(1/(N·K)) Σ_n Σ_k (ŷ_nk − y_nk)²` over the given rows and its
    /// gradient with respect to [`Mlp::params`].
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::Shape {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let k = self.n_outputs();
        for (x, y) in xs.iter().zip(ys) {
            if x.len() != self.n_inputs() || y.len() != k {
                return Err(Error::Shape {
                    expected: self.n_inputs(),
                    got: x.len(),
                });
            }
        }
        let scale = 1.0 / (xs.len() * k) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let sq: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| self.backprop(x, y, scale, &mut grad))
            .sum();
        Ok((sq * scale, grad))
    }

    pub fn loss(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<f64> {
        let k = self.n_outputs();
        let mut sq = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            sq += self
                .forward(x)?
                .iter()
                .zip(*y)
                .map(|(o, t)| (o - t).powi(2))
                .sum::<f64>();
        }
        Ok(sq / (xs.len() * k) as f64)
    }
}
