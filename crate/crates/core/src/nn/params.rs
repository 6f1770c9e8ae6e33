use rand::Rng;
use sha2::{Digest, Sha256};

use super::spec::{Activation, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

/// One named layer entry: weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub weights: Tensor,
    pub biases: Tensor,
}

/// Ordered, named parameter set exchanged by the federation protocol.
///
/// Gradients and Adam moments reuse this type so congruence checks cover them
/// too.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub entries: Vec<ParamEntry>,
    /// Round index the parameters belong to.
    pub round: u64,
}

impl ModelParameters {
    /// Zero-filled parameters shaped for `spec`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut entries = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            for (suffix, wshape, bshape) in layer.param_shapes() {
                entries.push(ParamEntry {
                    name: format!("{i}.{suffix}"),
                    weights: Tensor::zeros(wshape),
                    biases: Tensor::zeros(bshape),
                });
            }
        }
        Ok(Self { entries, round: 0 })
    }

    /// Random weights and biases, deterministic under `seed`.
    ///
    /// Weights that feed a ReLU are He-uniform, `U(+-sqrt(6 / fan_in))`; all
    /// others (the depthwise stage, linear outputs) are Glorot-uniform,
    /// `U(+-sqrt(6 / (fan_in + fan_out)))`. Biases are `U(+-1 / sqrt(fan_in))`,
    /// which spreads the ReLU breakpoints instead of stacking them all at
    /// zero. Fans follow the tensor layout: `[out, in]` for dense and
    /// pointwise, `[out, in, k]` for conv, `[channels, k]` for depthwise
    /// (each channel sees `k` taps).
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        let mut rng = seed::rng(seed);
        let mut entries = params.entries.iter_mut();
        for layer in &spec.layers {
            let relu = layer.weight_activation() == Some(Activation::Relu);
            for (suffix, shape, _) in layer.param_shapes() {
                let entry = entries.next().expect("zeros() creates one entry per shape");
                let (fan_in, fan_out) = match (suffix, shape.as_slice()) {
                    ("depthwise", &[_, k]) => (k, k),
                    (_, &[out, inp]) => (inp, out),
                    (_, &[out, inp, k]) => (inp * k, out * k),
                    _ => unreachable!("parameter tensors are rank 2 or 3"),
                };
                let limit = if relu && suffix != "depthwise" {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                for w in entry.weights.values_mut() {
                    *w = rng.random_range(-limit..limit);
                }
                let bias_limit = 1.0 / (fan_in as f64).sqrt();
                for b in entry.biases.values_mut() {
                    *b = rng.random_range(-bias_limit..bias_limit);
                }
            }
        }
        Ok(params)
    }

    pub fn param_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.weights.len() + e.biases.len())
            .sum()
    }

    /// Same names, order and shapes.
    pub fn congruent(&self, other: &ModelParameters) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name && a.weights.same_shape(&b.weights) && a.biases.same_shape(&b.biases)
            })
    }

    pub(crate) fn ensure_congruent(&self, other: &ModelParameters, what: &str) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::structural(format!("{what}: parameter sets are not congruent")))
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    weights: Tensor::zeros(e.weights.shape().to_vec()),
                    biases: Tensor::zeros(e.biases.shape().to_vec()),
                })
                .collect(),
            round: self.round,
        }
    }

    /// All tensors in entry order, weights before biases.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().flat_map(|e| [&e.weights, &e.biases])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries
            .iter_mut()
            .flat_map(|e| [&mut e.weights, &mut e.biases])
    }

    /// Flattened view of every value, in [`ModelParameters::tensors`] order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.values().iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }

    pub fn max_abs_diff(&self, other: &ModelParameters) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// SHA-256 of the binary encoding, lowercase hex.
    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(super::codec::encode(self));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
