//! Named, ordered tensor collections backing models and checkpoints.

use std::collections::HashMap;

use crate::element::Element;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<E> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<E>,
}

/// Insertion-ordered set of named tensors. Order is the creation order of the
/// network builder, which makes serialized layouts and optimizer state
/// alignment deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<E> {
    entries: Vec<ParamTensor<E>>,
    index: HashMap<String, usize>,
}

impl<E: Element> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<E>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::spec(format!("duplicate tensor name {name}")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!(
                "tensor {name}: shape {shape:?} vs {} values",
                values.len()
            )));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamTensor { name, shape, values });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<E>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<E>> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i])
    }

    pub fn entry(&self, i: usize) -> &ParamTensor<E> {
        &self.entries[i]
    }

    pub fn entry_mut(&mut self, i: usize) -> &mut ParamTensor<E> {
        &mut self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor<E>> {
        self.entries.iter()
    }

    /// Total scalar count across all tensors.
    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|t| t.values.len()).sum()
    }

    /// Lossless element conversion (f32 -> f64 is exact).
    pub fn convert<F: Element>(&self) -> ParamSet<F> {
        let mut out = ParamSet::new();
        for t in &self.entries {
            let values = t.values.iter().map(|&v| F::from_f64(v.to_f64())).collect();
            out.push(t.name.clone(), t.shape.clone(), values)
                .expect("names already unique");
        }
        out
    }
}
