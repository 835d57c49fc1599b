use indexmap::IndexMap;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Name-keyed gradients, in parameter binding order.
pub type Gradients<T> = IndexMap<String, Tensor<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub tensor: Tensor<T>,
    /// False for buffers such as batch-norm running statistics.
    pub trainable: bool,
}

/// Ordered store of named model tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams<T> {
    entries: IndexMap<String, ParamEntry<T>>,
}

/// Buffers are recognised by name so they survive a checkpoint round trip.
pub fn is_buffer_name(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        self.entries.insert(name, ParamEntry { tensor, trainable });
        Ok(())
    }

    /// Inserts with trainability inferred from the name.
    pub fn insert_named(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        let trainable = !is_buffer_name(&name);
        self.insert(name, tensor, trainable)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.tensor).ok_or_else(|| TensorError::MissingParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|e| &mut e.tensor).ok_or_else(|| TensorError::MissingParam(name.into()))
    }

    /// Replaces an existing tensor, keeping its shape contract.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != tensor.shape() {
            return Err(TensorError::Shape {
                op: "params.set",
                msg: format!("`{name}` is {:?}, got {:?}", slot.shape(), tensor.shape()),
            });
        }
        *slot = tensor;
        Ok(())
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

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.values().filter(|e| e.trainable).map(|e| e.tensor.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| (k.clone(), ParamEntry { tensor: e.tensor.cast(), trainable: e.trainable }))
                .collect(),
        }
    }
}
