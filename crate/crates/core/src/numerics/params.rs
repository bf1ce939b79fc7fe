use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::{Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    value: Tensor,
    grad: Tensor,
}

/// Named parameters, each paired with a gradient of identical shape.
///
/// Iteration is sorted by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) a parameter and zeroes its gradient.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.shape());
        self.slots.insert(name.into(), Slot { value, grad });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        match self.slots.get(name) {
            Some(s) => Ok(&s.value),
            None => bail!(NotFound, "parameter {name}"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.slots.get_mut(name) {
            Some(s) => Ok(&mut s.value),
            None => bail!(NotFound, "parameter {name}"),
        }
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        match self.slots.get(name) {
            Some(s) => Ok(&s.grad),
            None => bail!(NotFound, "gradient {name}"),
        }
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.slots.get_mut(name) {
            Some(s) => Ok(&mut s.grad),
            None => bail!(NotFound, "gradient {name}"),
        }
    }

    /// Parameter value and its gradient slot, borrowed together.
    pub fn split_mut(&mut self, name: &str) -> Result<(&Tensor, &mut Tensor)> {
        match self.slots.get_mut(name) {
            Some(s) => Ok((&s.value, &mut s.grad)),
            None => bail!(NotFound, "parameter {name}"),
        }
    }

    /// Adds `delta` into the gradient of `name`.
    pub fn accumulate(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        self.grad_mut(name)?.axpy(1.0, delta)
    }

    pub fn zero_grads(&mut self) {
        for s in self.slots.values_mut() {
            s.grad.fill(0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.slots
            .iter()
            .map(|(k, s)| (k.as_str(), &s.value, &s.grad))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor, &mut Tensor)> {
        self.slots
            .iter_mut()
            .map(|(k, s)| (k.as_str(), &mut s.value, &mut s.grad))
    }

    pub fn grad_norm(&self) -> f64 {
        math::sqrt(self.slots.values().map(|s| s.grad.sum_sq()).sum())
    }

    /// `(name, value)` pairs in iteration order.
    pub fn values(&self) -> Vec<(String, Tensor)> {
        self.slots
            .iter()
            .map(|(k, s)| (k.to_string(), s.value.clone()))
            .collect()
    }

    pub fn from_values(entries: impl IntoIterator<Item = (String, Tensor)>) -> Self {
        let mut store = Self::new();
        for (k, v) in entries {
            store.insert(k, v);
        }
        store
    }
}
