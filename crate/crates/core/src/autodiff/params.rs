use std::collections::BTreeMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Handle to a trainable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named, trainable 2-D tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Owner of every trainable tensor of a model.
///
/// Graphs read parameter values from the store and write gradients back
/// through [`crate::autodiff::Graph::accumulate_param_grads`]. The store is
/// plain data: sharing `&ParamStore` across threads between optimizer steps
/// is safe, `adam_step` needs `&mut`.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: [usize; 2], data: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(data.len(), shape[0] * shape[1], "param `{name}` data length");
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name `{name}`");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape,
            grad: vec![0.0; data.len()],
            data,
        });
        id
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: [usize; 2]) -> ParamId {
        self.add(name, shape, vec![0.0; shape[0] * shape[1]])
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: [usize; 2]) -> ParamId {
        self.add(name, shape, vec![1.0; shape[0] * shape[1]])
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, with `shape = [fan_in, fan_out]`.
    pub fn xavier<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: [usize; 2], rng: &mut R) -> ParamId {
        let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        let data = (0..shape[0] * shape[1])
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        self.add(name, shape, data)
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

    pub fn by_name(&self, name: &str) -> Result<&Param> {
        self.id(name)
            .map(|id| self.get(id))
            .ok_or_else(|| Error::invalid(format!("no parameter named `{name}`")))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Result<&mut Param> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::invalid(format!("no parameter named `{name}`")))?;
        Ok(self.get_mut(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    /// Scalar count of every parameter whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(Param::len)
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// SHA-256 over names, shapes and the little-endian bytes of every value.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.name.as_bytes());
            hasher.update((p.shape[0] as u64).to_le_bytes());
            hasher.update((p.shape[1] as u64).to_le_bytes());
            for v in &p.data {
                hasher.update(v.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
