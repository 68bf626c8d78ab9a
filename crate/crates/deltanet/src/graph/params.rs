//! Named trainable tensors with optimizer state.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// One named entry: value, gradient and Adam moments, all shape-equal.
#[derive(Debug, Clone)]
pub struct Param<E: Elem> {
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
    pub adam_m: Tensor<E>,
    pub adam_v: Tensor<E>,
    pub trainable: bool,
}

/// Ordered map of parameters. Names follow
/// `layer{index}.{weight|gamma|beta|bias|running_mean|running_var}`;
/// insertion order is the serialization order.
#[derive(Debug, Clone)]
pub struct ParamStore<E: Elem = f32> {
    entries: IndexMap<String, Param<E>>,
    pub step_count: u64,
}

impl<E: Elem> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Elem> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
            step_count: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<E>, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let zeros = Tensor::zeros(value.shape())?;
        self.entries.insert(
            name.to_string(),
            Param {
                grad: zeros.clone(),
                adam_m: zeros.clone(),
                adam_v: zeros,
                value,
                trainable,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<E>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<E>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<E>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<E>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().fill(E::zero());
        }
    }

    /// Total scalar count over trainable entries.
    pub fn trainable_scalars(&self) -> u64 {
        self.entries
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.value.len() as u64)
            .sum()
    }

    /// Converts the element type, zeroing gradients and moments.
    pub fn cast<T: Elem>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, p) in self.iter() {
            out.insert(name, p.value.cast(), p.trainable).unwrap();
        }
        out.step_count = self.step_count;
        out
    }
}
