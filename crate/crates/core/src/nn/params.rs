use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const BUFFER_SUFFIXES: [&str; 2] = [".running_mean", ".running_var"];

/// Named model tensors in a stable insertion order. Names ending in
/// `.running_mean` / `.running_var` are normalization buffers; everything
/// else is trainable.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelParams<E: Element = f32> {
    tensors: IndexMap<String, Tensor<E>>,
}

pub fn is_buffer(name: &str) -> bool {
    BUFFER_SUFFIXES.iter().any(|s| name.ends_with(s))
}

impl<E: Element> ModelParams<E> {
    pub fn new() -> Self {
        Self { tensors: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<E>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<E>> {
        self.tensors.get(name).ok_or_else(|| Error::config(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<E>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::config(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<E>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.iter().filter(|(k, _)| !is_buffer(k))
    }

    pub fn num_trainable_values(&self) -> usize {
        self.trainable().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<F: Element>(&self) -> ModelParams<F> {
        ModelParams { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }
}
