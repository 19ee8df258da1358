//! Named learnable parameters.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named tensor owned by a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub id: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Index of a parameter inside its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of parameters with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_id: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        let id = id.into();
        if self.by_id.contains_key(&id) {
            return Err(Error::Config(format!("duplicate parameter id {id:?}")));
        }
        let index = self.params.len();
        self.by_id.insert(id.clone(), index);
        self.params.push(Parameter {
            id,
            tensor,
            trainable,
        });
        Ok(ParamId(index))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn lookup(&self, id: &str) -> Option<ParamId> {
        self.by_id.get(id).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Order-sensitive FNV-1a checksum over ids and raw bits.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.id.as_bytes());
            for v in p.tensor.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        hash
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Gradient by parameter name.
    pub fn by_name<'a>(&'a self, params: &ParamSet, id: &str) -> Option<&'a Tensor> {
        params.lookup(id).map(|pid| &self.grads[pid.0])
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add(&mut self, other: &ParamGrads) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::dim(
                "grad accumulate",
                &[self.grads.len()],
                &[other.grads.len()],
            ));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(b, 1.0)?;
        }
        Ok(())
    }
}
