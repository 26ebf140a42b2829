use indexmap::IndexMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to an entry of a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: Tensor,
    grad: Option<Tensor>,
    trainable: bool,
}

/// Named trainable parameters plus non-trainable buffers (BN running stats).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Entry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.entries.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let (idx, _) = self.entries.insert_full(
            name.to_string(),
            Entry {
                value,
                grad: None,
                trainable,
            },
        );
        Ok(ParamId(idx))
    }

    pub fn add_param(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).expect("stale ParamId").0
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.entries[id.0].grad.as_ref()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.entries
            .values()
            .enumerate()
            .filter(|(_, e)| e.trainable)
            .map(|(i, _)| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value, e.trainable))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) -> Result<()> {
        let e = &mut self.entries[id.0];
        if g.len() != e.value.len() {
            return Err(Error::contract(format!(
                "gradient for {:?} has {} values, parameter has {}",
                self.entries.get_index(id.0).unwrap().0,
                g.len(),
                self.entries[id.0].value.len()
            )));
        }
        match &mut e.grad {
            Some(acc) => acc.data_mut().iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => {
                e.grad = Some(Tensor::new(e.value.shape().to_vec(), g.to_vec())?);
            }
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad = None;
        }
    }

    pub(crate) fn take_grad(&mut self, id: ParamId) -> Option<Tensor> {
        self.entries[id.0].grad.take()
    }

    /// Overwrite values from `(name, tensor)` pairs; every name must exist with
    /// a matching shape.
    pub fn assign<'a>(&mut self, values: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        for (name, t) in values {
            let e = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::contract(format!("unknown parameter {name:?}")))?;
            if e.value.shape() != t.shape() {
                return Err(Error::contract(format!(
                    "parameter {name:?} has shape {:?}, checkpoint has {:?}",
                    e.value.shape(),
                    t.shape()
                )));
            }
            e.value = t.clone();
        }
        Ok(())
    }
}
