use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

/// Which sub-network owns a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    /// α: CNN + bidirectional GRU stack.
    SemanticEncoder,
    /// β: dense layers ahead of the channel.
    ChannelEncoder,
    /// δ: dense layers after the channel.
    ChannelDecoder,
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    partition: Partition,
    value: Tensor,
}

/// Named, partitioned model parameters. Iteration order is by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Entry>,
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet::default()
    }

    pub fn insert(&mut self, name: &str, partition: Partition, value: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(TensorError::DuplicateParameter(name.to_string()));
        }
        self.entries
            .insert(name.to_string(), Entry { partition, value });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn partition(&self, name: &str) -> Option<Partition> {
        self.entries.get(name).map(|e| e.partition)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Partition, &Tensor)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.as_str(), e.partition, &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Replaces a value in place, keeping its partition; shapes must agree.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set",
                detail: format!("`{name}`: {:?} vs {:?}", entry.value.shape(), value.shape()),
            });
        }
        entry.value = value;
        Ok(())
    }
}

/// Gradients keyed exactly like the [`ParameterSet`] they were computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients {
            entries: params
                .iter()
                .map(|(name, _, t)| (name.to_string(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn accumulate(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        slot.add_assign(delta);
        Ok(())
    }

    /// Adds every gradient of `other` into `self`.
    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        for (name, g) in &other.entries {
            self.accumulate(name, g)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.entries.values_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// Euclidean norm over every entry of every gradient.
    pub fn norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// `θ ← θ − η·∇θ`, elementwise over every parameter.
pub fn sgd_step(params: &mut ParameterSet, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(TensorError::Degenerate {
            op: "sgd_step",
            detail: format!("learning rate {lr} must be positive"),
        });
    }
    // Validate every key before touching anything.
    for name in params.entries.keys() {
        if !grads.entries.contains_key(name) {
            return Err(TensorError::MissingGradient(name.clone()));
        }
    }
    for (name, entry) in params.entries.iter_mut() {
        let g = &grads.entries[name];
        if g.shape() != entry.value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sgd_step",
                detail: format!("`{name}`: {:?} vs {:?}", entry.value.shape(), g.shape()),
            });
        }
        for (p, g) in entry.value.data_mut().iter_mut().zip(g.data()) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Uniform in `[-l, l]` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}
