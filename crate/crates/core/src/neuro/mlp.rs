use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NeuroError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    /// No hidden non-linearity; only meaningful for single-layer nets.
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer. Weights are stored input-major: `w[i * out + o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

/// Multilayer perceptron with f32 parameters and f64 arithmetic. Hidden
/// layers use `activation`; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input; `acts[k]` the output of layer `k - 1`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has the input at least")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradients shaped like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()])).collect() }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Parameters in serialisation order (per layer: weights, then biases).
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b).copied()).collect()
    }
}

impl Mlp {
    /// Glorot-uniform weights `±sqrt(6 / (fan_in + fan_out))` and zero biases.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, NeuroError> {
        let mut net = Self::zeros(widths, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut net.layers {
            let bound = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            l.w.iter_mut().for_each(|w| *w = dist.sample(&mut rng) as f32);
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self, NeuroError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NeuroError::BadArchitecture(format!("widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer { inputs: w[0], outputs: w[1], w: vec![0.0; w[0] * w[1]], b: vec![0.0; w[1]] })
            .collect();
        Ok(Self { widths: widths.to_vec(), activation, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<(), NeuroError> {
        if x.len() != batch * self.input_dim() {
            return Err(NeuroError::ShapeMismatch { expected: batch * self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Forward pass over a row-major `[batch, in]` input.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>, NeuroError> {
        Ok(self.forward_tape(x, batch)?.acts.pop().unwrap())
    }

    pub fn forward_tape(&self, x: &[f64], batch: usize) -> Result<Tape, NeuroError> {
        self.check_input(x, batch)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let input = &acts[k];
            let mut out = vec![0.0f64; batch * l.outputs];
            for b in 0..batch {
                let row = &mut out[b * l.outputs..(b + 1) * l.outputs];
                for (o, &bias) in row.iter_mut().zip(&l.b) {
                    *o = bias as f64;
                }
                for (i, &xi) in input[b * l.inputs..(b + 1) * l.inputs].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let w = &l.w[i * l.outputs..(i + 1) * l.outputs];
                    for (o, &wv) in row.iter_mut().zip(w) {
                        *o += xi * wv as f64;
                    }
                }
                if k != last {
                    row.iter_mut().for_each(|v| *v = self.activation.apply(*v));
                }
            }
            acts.push(out);
        }
        Ok(Tape { batch, acts })
    }

    /// Accumulates parameter gradients for output gradient `dy` into `grads`
    /// and returns the input gradient when `want_input` is set.
    pub fn backward(&self, tape: &Tape, dy: &[f64], grads: &mut Grads, want_input: bool) -> Option<Vec<f64>> {
        let batch = tape.batch;
        let mut delta = dy.to_vec();
        let last = self.layers.len() - 1;
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            if k != last {
                let out = &tape.acts[k + 1];
                for (d, &o) in delta.iter_mut().zip(out) {
                    *d *= self.activation.derivative(o);
                }
            }
            let input = &tape.acts[k];
            let (gw, gb) = &mut grads.layers[k];
            for b in 0..batch {
                let d = &delta[b * l.outputs..(b + 1) * l.outputs];
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g += dv;
                }
                for (i, &xi) in input[b * l.inputs..(b + 1) * l.inputs].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (g, &dv) in gw[i * l.outputs..(i + 1) * l.outputs].iter_mut().zip(d) {
                        *g += xi * dv;
                    }
                }
            }
            if k == 0 && !want_input {
                return None;
            }
            let mut prev = vec![0.0f64; batch * l.inputs];
            for b in 0..batch {
                let d = &delta[b * l.outputs..(b + 1) * l.outputs];
                for (i, p) in prev[b * l.inputs..(b + 1) * l.inputs].iter_mut().enumerate() {
                    let w = &l.w[i * l.outputs..(i + 1) * l.outputs];
                    *p = dot(w, d);
                }
            }
            delta = prev;
        }
        Some(delta)
    }

    /// Mean-squared error over all batch rows and output dims, and its
    /// gradient with respect to every parameter.
    pub fn mse_grad(&self, x: &[f64], y: &[f64], batch: usize) -> Result<(f64, Grads), NeuroError> {
        let tape = self.forward_tape(x, batch)?;
        let (loss, dy) = mse(tape.output(), y)?;
        let mut grads = Grads::zeros_like(self);
        self.backward(&tape, &dy, &mut grads, false);
        Ok((loss, grads))
    }

    /// Parameters in serialisation order (per layer: weights, then biases).
    pub fn params(&self) -> Vec<f32> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, flat: &[f32]) -> Result<(), NeuroError> {
        if flat.len() != self.param_count() {
            return Err(NeuroError::ShapeMismatch { expected: self.param_count(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

/// Dot product with four interleaved accumulators (fixed order, so results
/// are reproducible).
fn dot(w: &[f32], d: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = w.len() / 4;
    for c in 0..chunks {
        for j in 0..4 {
            acc[j] += w[4 * c + j] as f64 * d[4 * c + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..w.len() {
        s += w[j] as f64 * d[j];
    }
    s
}

/// Mean-squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NeuroError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NeuroError::ShapeMismatch { expected: pred.len(), got: target.len() });
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    Ok((loss / n, grad))
}
