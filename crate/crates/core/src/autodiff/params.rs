use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to an entry of a [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }
}

/// Named trainable tensors, each paired with a gradient buffer of the same shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<Parameter>,
}

/// Serialized form: values only, gradients are transient.
#[derive(Serialize, Deserialize)]
struct StoredParameter {
    name: String,
    value: Tensor,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|p| p.name == name) {
            return Err(Error::contract(format!("duplicate parameter name `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Parameter { name, value, grad });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Dense weight with Glorot-uniform init: U(±sqrt(6 / (fan_in + fan_out))).
    pub fn add_dense_weight<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        self.add(name, Tensor::from_parts(vec![fan_in, fan_out], data))
    }

    pub fn add_bias(&mut self, name: impl Into<String>, width: usize) -> Result<ParamId> {
        self.add(name, Tensor::zeros(&[width]))
    }

    /// Embedding table with entries drawn from U(±0.05).
    pub fn add_embedding<R: Rng>(
        &mut self,
        name: impl Into<String>,
        cardinality: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let data = (0..cardinality * dim)
            .map(|_| rng.random_range(-0.05..=0.05))
            .collect();
        self.add(name, Tensor::from_parts(vec![cardinality, dim], data))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0]
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

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    /// Total number of scalar coordinates.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill_zero();
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor) {
        self.entries[id.0].grad.add_assign(grad);
    }

    /// Copies values (not gradients) from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::contract("parameter sets differ in length"));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::contract(format!(
                    "parameter layout mismatch at `{}`",
                    dst.name
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }

    /// Plain SGD: `θ ← θ − lr·∇θ` for every entry, then zero the gradients.
    ///
    /// All gradients are checked for finiteness before any value is touched.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::Training(format!("invalid learning rate {lr}")));
        }
        for p in &self.entries {
            if p.grad.data().iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in parameter `{}`",
                    p.name
                )));
            }
        }
        for p in &mut self.entries {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= lr * g;
            }
            p.grad.fill_zero();
        }
        Ok(())
    }
}

impl Serialize for ParameterSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for p in &self.entries {
            seq.serialize_element(&StoredParameter {
                name: p.name.clone(),
                value: p.value.clone(),
            })?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ParameterSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let stored = Vec::<StoredParameter>::deserialize(deserializer)?;
        let mut set = ParameterSet::new();
        for s in stored {
            let value = Tensor::new(s.value.shape().to_vec(), s.value.into_data())
                .map_err(serde::de::Error::custom)?;
            set.add(s.name, value).map_err(serde::de::Error::custom)?;
        }
        Ok(set)
    }
}
