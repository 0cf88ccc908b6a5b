use serde::{Deserialize, Serialize};

use super::tape::{DiffScalar, Tape};

/// Optimizer groups; each trainable scalar belongs to exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Coefficients,
    Biases,
    ExponentRaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub group: ParamGroup,
    pub offset: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat vector of trainable scalars, partitioned into named blocks.
///
/// Block order is the insertion order and never changes, so flat indices are
/// stable for the life of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    values: Vec<f64>,
    blocks: Vec<ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a block and return its offset.
    pub fn push_block(&mut self, name: impl Into<String>, group: ParamGroup, values: &[f64]) -> usize {
        let offset = self.values.len();
        self.blocks.push(ParamBlock {
            name: name.into(),
            group,
            offset,
            len: values.len(),
        });
        self.values.extend_from_slice(values);
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_values(&self, name: &str) -> Option<&[f64]> {
        self.block(name).map(|b| &self.values[b.range()])
    }

    pub fn block_values_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.block(name)?.range();
        Some(&mut self.values[range])
    }

    /// Flat indices of every entry in `group`, in store order.
    pub fn group_indices(&self, group: ParamGroup) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| b.group == group)
            .flat_map(|b| b.range())
            .collect()
    }

    /// Group of every flat entry.
    pub fn group_map(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.values.len());
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.group, b.len));
        }
        out
    }

    pub fn count(&self, group: ParamGroup) -> usize {
        self.blocks.iter().filter(|b| b.group == group).map(|b| b.len).sum()
    }

    /// Record every entry as a leaf on `tape`, in flat order.
    pub fn lift<'t>(&self, tape: &'t Tape) -> Vec<DiffScalar<'t>> {
        self.values.iter().map(|&v| tape.var(v)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
