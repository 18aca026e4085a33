//! Minimal feed-forward network machinery: a two-hidden-layer MLP with
//! rectified-linear activations, exact backpropagation of the mean-squared
//! error on selected outputs, and the Adam optimizer. Everything is plain
//! `f64` so gradient checks and reproducibility are exact.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dense layer; `w` is row-major with shape `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> Self {
        Self {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }
}

/// Network weights. `layer_sizes` is `[input, h1, h2, output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

/// Gradients with the same shapes as the parameters they refer to.
pub type Gradients = Vec<DenseLayer>;

/// Draw weights from a fan-in-scaled symmetric uniform distribution,
/// biases zero.
pub fn init_params(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> MlpParams {
    assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    for win in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        layers.push(DenseLayer {
            w,
            b: vec![0.0; fan_out],
        });
    }
    MlpParams {
        layer_sizes: layer_sizes.to_vec(),
        layers,
    }
}

impl MlpParams {
    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

fn affine(layer: &DenseLayer, input: &[f64], out: &mut Vec<f64>) {
    let rows = layer.b.len();
    let cols = input.len();
    out.clear();
    for r in 0..rows {
        let mut acc = layer.b[r];
        let row = &layer.w[r * cols..(r + 1) * cols];
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        out.push(acc);
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Q-values for one observation: `W3·relu(W2·relu(W1·x+b1)+b2)+b3`.
pub fn forward(params: &MlpParams, obs: &[f64]) -> Vec<f64> {
    assert_eq!(obs.len(), params.input_size(), "input shape mismatch");
    let mut cur = obs.to_vec();
    let mut next = Vec::new();
    let last = params.layers.len() - 1;
    for (idx, layer) in params.layers.iter().enumerate() {
        affine(layer, &cur, &mut next);
        if idx != last {
            relu_inplace(&mut next);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// One training example: observation, index of the output unit under the
/// loss, and its regression target.
pub type BatchItem = (Vec<f64>, usize, f64);

/// Exact gradients of the mean-squared error
/// `(1/B) * sum_b (Q(x_b)[a_b] - y_b)^2` over the batch. Only the selected
/// output unit of each example receives loss signal.
pub fn backward(params: &MlpParams, batch: &[BatchItem]) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Contract("backward on an empty batch".into()));
    }
    let mut grads: Gradients = params.layers.iter().map(|l| l.zeros_like()).collect();
    let scale = 2.0 / batch.len() as f64;

    for (obs, action, target) in batch {
        assert_eq!(obs.len(), params.input_size(), "input shape mismatch");
        assert!(*action < params.output_size(), "action index out of range");

        // Forward pass keeping post-activation values per layer.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len() + 1);
        activations.push(obs.clone());
        let last = params.layers.len() - 1;
        for (idx, layer) in params.layers.iter().enumerate() {
            let mut out = Vec::new();
            affine(layer, activations.last().unwrap(), &mut out);
            if idx != last {
                relu_inplace(&mut out);
            }
            activations.push(out);
        }

        // Loss signal enters only through the chosen output unit.
        let q = activations.last().unwrap()[*action];
        let mut delta = vec![0.0; params.output_size()];
        delta[*action] = scale * (q - target);

        for idx in (0..params.layers.len()).rev() {
            let input = &activations[idx];
            let cols = input.len();
            let grad = &mut grads[idx];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grad.b[r] += d;
                let row = &mut grad.w[r * cols..(r + 1) * cols];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if idx > 0 {
                let layer = &params.layers[idx];
                let mut prev = vec![0.0; cols];
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[r * cols..(r + 1) * cols];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += d * wi;
                    }
                }
                // Gate through the rectifier of the producing layer.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grads)
}

/// Batch loss value; handy for monitoring and tests.
pub fn batch_loss(params: &MlpParams, batch: &[BatchItem]) -> f64 {
    let mut acc = 0.0;
    for (obs, action, target) in batch {
        let q = forward(params, obs)[*action];
        acc += (q - target) * (q - target);
    }
    acc / batch.len() as f64
}

/// Adam optimizer state: first/second moments plus the step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<DenseLayer>,
    pub second_moment: Vec<DenseLayer>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Standard configuration: beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        Self {
            first_moment: params.layers.iter().map(|l| l.zeros_like()).collect(),
            second_moment: params.layers.iter().map(|l| l.zeros_like()).collect(),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) {
    assert_eq!(params.layers.len(), grads.len(), "gradient shape mismatch");
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (idx, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads[idx];
        assert_eq!(layer.w.len(), g.w.len(), "gradient shape mismatch");
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        };
        for i in 0..layer.w.len() {
            update(&mut layer.w[i], g.w[i], &mut m.w[i], &mut v.w[i]);
        }
        for i in 0..layer.b.len() {
            update(&mut layer.b[i], g.b[i], &mut m.b[i], &mut v.b[i]);
        }
    }
}

/// Clip the global gradient norm to `max_norm` if it exceeds it.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) {
    let mut sq = 0.0;
    for g in grads.iter() {
        sq += g.w.iter().map(|x| x * x).sum::<f64>();
        sq += g.b.iter().map(|x| x * x).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.w.iter_mut().for_each(|x| *x *= s);
            g.b.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Versioned checkpoint layout: layer sizes, then row-major weights and
/// biases per layer.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn save_checkpoint(params: &MlpParams, path: &std::path::Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: 1,
        layer_sizes: params.layer_sizes.clone(),
        weights: params.layers.iter().map(|l| l.w.clone()).collect(),
        biases: params.layers.iter().map(|l| l.b.clone()).collect(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if ckpt.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    if ckpt.weights.len() != ckpt.layer_sizes.len() - 1
        || ckpt.biases.len() != ckpt.weights.len()
    {
        return Err(Error::Checkpoint("layer count mismatch".into()));
    }
    let mut layers = Vec::new();
    for (idx, win) in ckpt.layer_sizes.windows(2).enumerate() {
        if ckpt.weights[idx].len() != win[0] * win[1] || ckpt.biases[idx].len() != win[1] {
            return Err(Error::Checkpoint(format!("layer {idx} shape mismatch")));
        }
        layers.push(DenseLayer {
            w: ckpt.weights[idx].clone(),
            b: ckpt.biases[idx].clone(),
        });
    }
    Ok(MlpParams {
        layer_sizes: ckpt.layer_sizes,
        layers,
    })
}
