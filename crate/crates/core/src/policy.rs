//! The state-augmented MLP slicing policy.
//!
//! Dense layers 11 -> 64 -> 64 -> 32 -> 3 with ReLU hidden activations and a
//! softmax head, so every output is a valid simplex point by construction.
//! Forward caches pre-activations; backward produces exact reverse-mode
//! gradients of the logits contracted with an upstream logit gradient.
//! The input is the 9-dim network-state vector concatenated with the two
//! dual multipliers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::domain::{DualMultipliers, NetworkStateVector, SliceAllocation};
use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 11;
pub const OUTPUT_DIM: usize = 3;
pub const LAYER_DIMS: [usize; 5] = [INPUT_DIM, 64, 64, 32, OUTPUT_DIM];

/// Checkpoint schema version.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One dense layer with row-major weights (`out_dim x in_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = self.biases.clone();
        for (row, out_v) in out.iter_mut().enumerate() {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            *out_v += w.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
        out
    }
}

/// Full parameter set of the policy MLP. Gradients share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub layers: Vec<DenseLayer>,
}

impl PolicyParams {
    /// All-zero parameters (uniform allocations for any input).
    pub fn zeros() -> Self {
        PolicyParams {
            layers: LAYER_DIMS
                .windows(2)
                .map(|d| DenseLayer::zeros(d[0], d[1]))
                .collect(),
        }
    }

    pub fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flattened view (weights then biases, layer by layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.flat_len());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }

    /// Rebuilds parameters of this shape from a flat slice.
    pub fn from_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.flat_len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.flat_len(),
                flat.len()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for layer in &mut out.layers {
            let w_len = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(out)
    }

    fn same_shape(&self, other: &PolicyParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    /// `self += alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: f64, other: &PolicyParams) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter shapes differ".to_string()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += alpha * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w *= c);
            layer.biases.iter_mut().for_each(|b| *b *= c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }
}

/// Policy input: network state features followed by the dual multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInput(pub [f64; INPUT_DIM]);

impl PolicyInput {
    pub fn new(state: &NetworkStateVector, lambda: &DualMultipliers) -> Self {
        let s = state.as_array();
        let l = lambda.as_array();
        let mut input = [0.0; INPUT_DIM];
        input[..9].copy_from_slice(&s);
        input[9..].copy_from_slice(&l);
        PolicyInput(input)
    }
}

/// Numerically stable softmax over the three logits.
pub fn softmax(logits: &[f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

/// Activations retained by [`forward`] for the matching [`backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input vector seen by each layer.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    preacts: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Smallest |pre-activation| across hidden units; inputs this close to a
    /// ReLU kink make finite-difference comparisons unreliable.
    pub fn min_hidden_preact_magnitude(&self) -> f64 {
        self.preacts[..self.preacts.len() - 1]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |acc, &z| acc.min(z.abs()))
    }
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: [f64; OUTPUT_DIM],
    pub allocation: SliceAllocation,
    pub cache: ForwardCache,
}

/// Runs the MLP: ReLU hidden layers, linear logits, softmax allocation.
pub fn forward(params: &PolicyParams, input: &PolicyInput) -> Result<ForwardPass> {
    if input.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition(format!(
            "non-finite policy input: {:?}",
            input.0
        )));
    }
    if params.layers.len() != LAYER_DIMS.len() - 1
        || params.layers[0].in_dim != INPUT_DIM
        || params.layers.last().map(|l| l.out_dim) != Some(OUTPUT_DIM)
    {
        return Err(Error::Shape("policy layer dimensions are wrong".to_string()));
    }

    let n_layers = params.layers.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut preacts = Vec::with_capacity(n_layers);
    let mut x: Vec<f64> = input.0.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        if layer.in_dim != x.len() {
            return Err(Error::Shape(format!(
                "layer {l} expects {} inputs, got {}",
                layer.in_dim,
                x.len()
            )));
        }
        layer_inputs.push(x.clone());
        let z = layer.affine(&x);
        preacts.push(z.clone());
        x = if l + 1 < n_layers {
            z.iter().map(|&v| v.max(0.0)).collect()
        } else {
            z
        };
    }

    let logits = [x[0], x[1], x[2]];
    let p = softmax(&logits);
    let allocation = SliceAllocation::new(p[0], p[1], p[2])?;
    Ok(ForwardPass {
        logits,
        allocation,
        cache: ForwardCache {
            layer_inputs,
            preacts,
        },
    })
}

/// Exact reverse-mode gradients of the logits w.r.t. all parameters,
/// contracted with `dl_dlogits`.
pub fn backward(
    params: &PolicyParams,
    cache: &ForwardCache,
    dl_dlogits: &[f64; OUTPUT_DIM],
) -> Result<PolicyParams> {
    if cache.layer_inputs.len() != params.layers.len() {
        return Err(Error::Shape(
            "cache does not match parameter layer count".to_string(),
        ));
    }
    let mut grads = PolicyParams::zeros();
    let mut delta: Vec<f64> = dl_dlogits.to_vec();
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        if cache.layer_inputs[l].len() != layer.in_dim || delta.len() != layer.out_dim {
            return Err(Error::Shape(format!("cache shape mismatch at layer {l}")));
        }
        let input = &cache.layer_inputs[l];
        let grad_layer = &mut grads.layers[l];
        for row in 0..layer.out_dim {
            let d = delta[row];
            grad_layer.biases[row] = d;
            let w_row = &mut grad_layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
            for (g, &xi) in w_row.iter_mut().zip(input) {
                *g = d * xi;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; layer.in_dim];
            for row in 0..layer.out_dim {
                let d = delta[row];
                let w_row = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(w_row) {
                    *p += d * w;
                }
            }
            // ReLU gate from the previous layer's pre-activations
            for (p, &z) in prev.iter_mut().zip(&cache.preacts[l - 1]) {
                if z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

/// He-uniform initialization (limit `sqrt(6 / fan_in)`), zero biases.
pub fn init_params<R: Rng>(rng: &mut R) -> PolicyParams {
    let mut params = PolicyParams::zeros();
    for layer in &mut params.layers {
        let limit = (6.0 / layer.in_dim as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
    }
    params
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    layers: Vec<DenseLayer>,
}

/// Writes a parameter checkpoint as JSON.
pub fn save_checkpoint<P: AsRef<Path>>(params: &PolicyParams, path: P) -> Result<()> {
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        layers: params.layers.clone(),
    };
    let json = serde_json::to_string(&checkpoint)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a checkpoint, validating format version and layer shapes.
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<PolicyParams> {
    let path = path.as_ref();
    let data = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    let checkpoint: Checkpoint = serde_json::from_str(&data)?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Shape(format!(
            "unsupported checkpoint format version {}",
            checkpoint.format_version
        )));
    }
    let params = PolicyParams {
        layers: checkpoint.layers,
    };
    let expected = PolicyParams::zeros();
    if !params.same_shape(&expected) {
        return Err(Error::Shape(
            "checkpoint layer shapes do not match the policy architecture".to_string(),
        ));
    }
    for layer in &params.layers {
        if layer.weights.len() != layer.in_dim * layer.out_dim
            || layer.biases.len() != layer.out_dim
        {
            return Err(Error::Shape("checkpoint layer sizes are inconsistent".to_string()));
        }
    }
    Ok(params)
}
