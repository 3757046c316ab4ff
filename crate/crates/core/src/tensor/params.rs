//! Named parameter store with Adam state.
//!
//! All trainable tensors live here under unique names; tapes reference them
//! by [`ParamId`] without copying. Gradients accumulate into the store and a
//! single [`ParameterStore::adam_step`] updates every parameter in
//! registration order, which keeps update order deterministic across runs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::tape::Gradients;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

struct Entry {
    name: String,
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
    /// Whether L2 regularization applies (off for embeddings and biases).
    decay: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 strength; added to the gradient of decay-flagged parameters.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.002, beta1: 0.9, beta2: 0.999, eps: 1e-8, l2: 0.0 }
    }
}

#[derive(Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor under a unique whitespace-free name.
    pub fn register(&mut self, name: &str, value: Tensor, decay: bool) -> Result<ParamId> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Contract(format!(
                "parameter name {name:?} must be non-empty without whitespace"
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("parameter {name:?} registered twice")));
        }
        let (r, c) = value.shape();
        let id = ParamId(self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            grad: Tensor::zeros(r, c),
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
            value,
            decay,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    /// Sum a backward pass's gradients into the store.
    pub fn accumulate(&mut self, grads: Gradients) {
        for (entry, g) in self.entries.iter_mut().zip(grads.into_inner()) {
            if let Some(g) = g {
                debug_assert_eq!(entry.grad.shape(), g.shape());
                for (a, b) in entry.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for entry in &mut self.entries {
            entry.grad.data_mut().fill(0.0);
        }
    }

    /// One Adam update over all parameters with bias correction. L2 is added
    /// to the gradient (not the update) for decay-flagged parameters only.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for entry in &mut self.entries {
            let l2 = if entry.decay { cfg.l2 } else { 0.0 };
            let n = entry.value.numel();
            for k in 0..n {
                let g = entry.grad.data()[k] + l2 * entry.value.data()[k];
                let m = cfg.beta1 * entry.m.data()[k] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * entry.v.data()[k] + (1.0 - cfg.beta2) * g * g;
                entry.m.data_mut()[k] = m;
                entry.v.data_mut()[k] = v;
                let mhat = m / bc1;
                let vhat = v / bc2;
                entry.value.data_mut()[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Copy of all parameter values (optimizer state excluded), used to keep
    /// the best validation checkpoint during training.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.entries.len() {
            return Err(Error::Contract(format!(
                "snapshot has {} tensors, store has {}",
                snapshot.len(),
                self.entries.len()
            )));
        }
        for (entry, t) in self.entries.iter_mut().zip(snapshot) {
            if entry.value.shape() != t.shape() {
                return Err(Error::Contract(format!(
                    "snapshot shape {:?} does not match parameter {} {:?}",
                    t.shape(),
                    entry.name,
                    entry.value.shape()
                )));
            }
            entry.value = t.clone();
        }
        Ok(())
    }

    /// `(name, value)` pairs sorted by name, for serialization.
    pub fn sorted_values(&self) -> Vec<(&str, &Tensor)> {
        let mut out: Vec<(&str, &Tensor)> =
            self.entries.iter().map(|e| (e.name.as_str(), &e.value)).collect();
        out.sort_by_key(|(n, _)| *n);
        out
    }

    /// Overwrite parameter values by name from deserialized tensors.
    /// Every stored name must already be registered with a matching shape.
    pub fn load_values(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        for (name, t) in values {
            let id = self.id(name).map_err(|_| {
                Error::Checkpoint(format!("checkpoint contains unknown parameter {name:?}"))
            })?;
            if self.entries[id.0].value.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint shape {:?} for {name:?} does not match model shape {:?}",
                    t.shape(),
                    self.entries[id.0].value.shape()
                )));
            }
            self.entries[id.0].value = t.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_rejects_duplicates_and_bad_names() {
        let mut s = ParameterStore::new();
        s.register("w", Tensor::zeros(1, 1), true).unwrap();
        assert!(s.register("w", Tensor::zeros(1, 1), true).is_err());
        assert!(s.register("has space", Tensor::zeros(1, 1), true).is_err());
        assert!(s.register("", Tensor::zeros(1, 1), true).is_err());
    }

    #[test]
    fn adam_first_step_moves_against_gradient_by_lr() {
        let mut s = ParameterStore::new();
        let id = s.register("w", Tensor::zeros(1, 1), false).unwrap();
        s.entries[id.0].grad.set(0, 0, 1.0);
        s.adam_step(&AdamConfig { lr: 0.002, ..Default::default() });
        // Bias-corrected first step is lr * g / (|g| + eps) ~= -lr.
        let w = s.value(id).item();
        assert!(w < 0.0);
        assert!((w + 0.002).abs() < 1e-6, "first Adam step should be ~lr, got {w}");
    }

    #[test]
    fn l2_applies_only_to_decay_flagged_parameters() {
        let mut s = ParameterStore::new();
        let with = s.register("decayed", Tensor::scalar(1.0), true).unwrap();
        let without = s.register("free", Tensor::scalar(1.0), false).unwrap();
        // Zero loss gradient: only the L2 term can move the decayed parameter.
        s.adam_step(&AdamConfig { l2: 0.01, ..Default::default() });
        assert!(s.value(with).item() < 1.0);
        assert_eq!(s.value(without).item(), 1.0);
    }

    #[test]
    fn snapshot_restore_roundtrips_values() {
        let mut s = ParameterStore::new();
        let id = s.register("w", Tensor::col_vec(&[1.0, 2.0]), true).unwrap();
        let snap = s.snapshot();
        s.value_mut(id).data_mut()[0] = 99.0;
        s.restore(&snap).unwrap();
        assert_eq!(s.value(id).data(), &[1.0, 2.0]);
    }
}
