use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors, kept in name order so serialization is stable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub tensors: BTreeMap<String, Tensor>,
}

/// Parameters registered as leaves of one tape.
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    /// Points `name` at another variable, e.g. a leaf under a gradient check.
    pub fn replace(&mut self, name: &str, var: Var) -> Result<()> {
        match self.vars.get_mut(name) {
            Some(v) => {
                *v = var;
                Ok(())
            }
            None => Err(Error::Checkpoint(format!("missing parameter {name}"))),
        }
    }

    /// Gradients of every parameter, in the same layout as the owning [`ParamSet`].
    pub fn gradients(&self, grads: &Gradients) -> ParamSet {
        ParamSet {
            tensors: self
                .vars
                .iter()
                .map(|(k, v)| (k.clone(), grads.get(*v)))
                .collect(),
        }
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Number of scalars in tensors whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), tape.leaf(t.clone())))
                .collect(),
        }
    }

    /// Registers every tensor as a constant.
    pub fn constants(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), tape.constant(t.clone())))
                .collect(),
        }
    }

    /// Same names and shapes with every entry zero.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// `self += c * other` for every tensor present in both.
    pub fn axpy(&mut self, c: f64, other: &ParamSet) {
        for (k, t) in &mut self.tensors {
            if let Some(o) = other.tensors.get(k) {
                t.axpy(c, o);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Checks that names and shapes match `expected` exactly.
    pub fn check_layout(&self, expected: &ParamSet) -> Result<()> {
        for (k, t) in &expected.tensors {
            let got = self.get(k)?;
            if got.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {k}: expected shape {:?}, got {:?}",
                    t.shape(),
                    got.shape()
                )));
            }
        }
        if let Some(extra) = self
            .tensors
            .keys()
            .find(|k| !expected.tensors.contains_key(*k))
        {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }
}

/// He-normal initialization `N(0, gain² · 2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let std = gain * (2.0 / fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = std * rng.sample::<f64, _>(StandardNormal);
    }
    t
}

/// Current parameter file version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk parameter file: a version, a free-form model description and the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub version: u32,
    pub model: M,
    pub params: ParamSet,
}

impl<M: Serialize + DeserializeOwned> Checkpoint<M> {
    pub fn new(model: M, params: ParamSet) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint<M> = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::data_io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
