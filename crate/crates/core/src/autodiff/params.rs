use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

/// Handle to a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Tensor,
    frozen: bool,
}

/// Named parameter tensors with persistent gradient accumulators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, false)
    }

    /// Adds a tensor that optimizers never update.
    pub fn add_frozen(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, true)
    }

    fn insert(&mut self, name: &str, value: Tensor, frozen: bool) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let (r, c) = value.shape();
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(r, c),
            frozen,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
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

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.frozen).map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Adds `grads` into the accumulators. Frozen entries are skipped.
    pub fn accumulate(&mut self, grads: &ParamGrads) {
        for (e, g) in self.entries.iter_mut().zip(&grads.grads) {
            if let (false, Some(g)) = (e.frozen, g) {
                e.grad.add_assign(g);
            }
        }
    }

    /// Replaces the value of `name`, checking that the shape matches.
    pub fn load(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Config(alloc::format!("unknown tensor `{name}`")))?;
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "load",
                lhs: entry.value.shape(),
                rhs: value.shape(),
            });
        }
        entry.value = value;
        Ok(())
    }
}

/// Per-parameter gradients from one backward pass, indexed by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    pub(crate) grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    /// `self += other`, in place.
    pub fn merge(&mut self, other: &ParamGrads) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t),
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_mut(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }
}
