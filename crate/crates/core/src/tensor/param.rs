use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::dense::DenseTensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Parameter {
    pub id: ParamId,
    pub name: String,
    pub value: DenseTensor,
    #[serde(skip)]
    pub gradient: Option<DenseTensor>,
}

impl Parameter {
    pub fn gradient(&self) -> DenseTensor {
        self.gradient
            .clone()
            .unwrap_or_else(|| self.value.zeros_like())
    }
}

/// Ordered collection of learnable tensors. Ids are dense indices in
/// registration order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseTensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            id,
            name: name.into(),
            value,
            gradient: None,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_gradients(&mut self, grads: BTreeMap<ParamId, DenseTensor>) -> Result<()> {
        for (id, g) in grads {
            let p = self
                .params
                .get_mut(id.0)
                .ok_or_else(|| Error::Shape(format!("unknown parameter {id}")))?;
            if !g.same_shape(&p.value) {
                return Err(Error::Shape(format!(
                    "gradient {:?} does not match parameter {} {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.gradient = Some(g);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.gradient = None);
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Shape(format!(
                "parameter count mismatch: expected {}, got {}",
                self.len(),
                other.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || !dst.value.same_shape(&src.value) {
                return Err(Error::Shape(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    dst.name,
                    dst.value.shape(),
                    src.name,
                    src.value.shape()
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}
