use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};

/// Ordered, named collection of learnable tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        self.entries.push((name, t));
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn total_dim(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Same names and shapes, values taken from `flat`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamSet> {
        let mut out = self.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_dim() {
            return Err(Error::invalid(format!(
                "flat vector has {} entries, parameter set has {}",
                flat.len(),
                self.total_dim()
            )));
        }
        let mut off = 0;
        for (_, t) in &mut self.entries {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Register every tensor as a graph leaf; `direction` seeds the tangents.
    pub fn register(&self, g: &mut Graph, direction: Option<&[f64]>) -> Result<Vec<NodeId>> {
        let dirs = match direction {
            Some(d) => Some(self.unflatten(d)?),
            None => None,
        };
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (_, t))| g.variable(t.clone(), dirs.as_ref().map(|d| d.tensor(i).clone())))
            .collect()
    }

    /// Register every tensor as a constant (zero tangent).
    pub fn register_constant(&self, g: &mut Graph) -> Vec<NodeId> {
        self.entries.iter().map(|(_, t)| g.constant(t.clone())).collect()
    }

    /// New set with entries in the given order.
    pub fn permuted(&self, order: &[usize]) -> Result<ParamSet> {
        let mut seen = vec![false; self.len()];
        let mut out = ParamSet::new();
        for &i in order {
            if i >= self.len() || seen[i] {
                return Err(Error::invalid(format!("bad permutation {order:?}")));
            }
            seen[i] = true;
            out.entries.push(self.entries[i].clone());
        }
        if out.len() != self.len() {
            return Err(Error::invalid(format!("bad permutation {order:?}")));
        }
        Ok(out)
    }
}
