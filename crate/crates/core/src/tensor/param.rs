use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its gradient slot.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Populated by backward, cleared by the optimizer step.
    pub grad: Option<Tensor>,
}

/// Ordered collection of parameters belonging to one network.
///
/// Insertion order is the canonical order for optimizer state and
/// checkpoints; names are unique.
#[derive(Clone, Debug)]
pub struct ParamStore {
    label: String,
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            params: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            grad: None,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Total scalar count over all parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Binding handle that records gradients for this store.
    pub fn trainable(&self) -> ParamView<'_> {
        ParamView {
            store: self,
            trainable: true,
        }
    }

    /// Binding handle that feeds values in as constants.
    pub fn frozen(&self) -> ParamView<'_> {
        ParamView {
            store: self,
            trainable: false,
        }
    }
}

/// How a network's parameters enter a graph: as differentiable leaves or
/// as constants.
#[derive(Clone, Copy)]
pub struct ParamView<'a> {
    pub(crate) store: &'a ParamStore,
    pub(crate) trainable: bool,
}

impl<'a> ParamView<'a> {
    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }
}
