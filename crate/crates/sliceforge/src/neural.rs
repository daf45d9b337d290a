//! Minimal dense network with exact reverse-mode gradients and a
//! bias-corrected adaptive-moment optimizer. Hidden layers are tanh, the
//! output layer is linear, and everything is f64 so gradients can be
//! checked against central finite differences.

use serde::{Deserialize, Serialize};

use crate::domain::RngStream;
use crate::error::Error;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Fully connected network. `weights[l]` is the (out x in) row-major matrix
/// feeding layer l+1; `biases[l]` has one entry per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations cached by a forward pass; input first, output last. Hidden
/// entries hold post-tanh values so the backward pass can use 1 - a^2.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Per-parameter gradients, shape-congruent with an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn zeros_like(net: &Mlp) -> GradientTape {
        GradientTape {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &GradientTape) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= k;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= k;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flatten().map(|x| x * x).sum();
        let b: f64 = self.biases.iter().flatten().map(|x| x * x).sum();
        w + b
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_pairs(&self.weights, &self.biases)
    }
}

fn flatten_pairs(weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    out
}

impl Mlp {
    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|d| (d[0] + 1) * d[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Parameters as one flat row-major vector (per layer: weights, bias).
    pub fn flatten(&self) -> Vec<f64> {
        flatten_pairs(&self.weights, &self.biases)
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<(), Error> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has {} entries, network needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut k = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    pub fn zeros(layer_dims: &[usize]) -> Mlp {
        assert!(layer_dims.len() >= 2, "network needs input and output dims");
        let weights = layer_dims
            .windows(2)
            .map(|d| vec![0.0; d[0] * d[1]])
            .collect();
        let biases = layer_dims.windows(2).map(|d| vec![0.0; d[1]]).collect();
        Mlp { layer_dims: layer_dims.to_vec(), weights, biases }
    }

    /// Forward pass, caching activations for the backward pass.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, Error> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let prev = &activations[l];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut z = self.biases[l][o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                next[o] = if l + 1 < layers { z.tanh() } else { z };
            }
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Exact reverse-mode gradients of <output_grad, output> with respect
    /// to every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<GradientTape, Error> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} entries, network emits {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        let layers = self.weights.len();
        let mut tape = GradientTape::zeros_like(self);
        let mut delta = output_grad.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let prev = &cache.activations[l];
            for o in 0..n_out {
                tape.biases[l][o] = delta[o];
                let row = &mut tape.weights[l][o * n_in..(o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(prev) {
                    *g = delta[o] * a;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += delta[o] * w;
                    }
                }
                // prev layer is tanh: d tanh = 1 - a^2.
                for (pd, a) in prev_delta.iter_mut().zip(prev) {
                    *pd *= 1.0 - a * a;
                }
                delta = prev_delta;
            }
        }
        Ok(tape)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(layer_dims: &[usize], rng: &mut RngStream) -> Mlp {
    let mut net = Mlp::zeros(layer_dims);
    for l in 0..net.weights.len() {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut net.weights[l] {
            *w = rng.uniform(-limit, limit);
        }
    }
    net
}

/// Bias-corrected adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, n_params: usize) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update step; rejects non-finite gradients.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), Error> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam state sized {} got params {} grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Scale a flat gradient so its global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= k;
        }
    }
    norm
}

/// Serialized network: flat row-major parameters plus optional optimizer
/// moments. JSON round-trips f64 exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetCheckpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

impl NetCheckpoint {
    pub fn from_net(net: &Mlp, optimizer: Option<&AdamState>) -> NetCheckpoint {
        NetCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_dims: net.layer_dims.clone(),
            params: net.flatten(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn into_net(self) -> Result<(Mlp, Option<AdamState>), Error> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} unsupported (expected {})",
                self.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        if self.layer_dims.len() < 2 {
            return Err(Error::Checkpoint("network needs at least two layer dims".into()));
        }
        let mut net = Mlp::zeros(&self.layer_dims);
        net.assign_from_flat(&self.params)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != net.param_count() {
                return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
            }
        }
        Ok((net, self.optimizer))
    }
}
