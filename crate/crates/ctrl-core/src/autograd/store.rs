//! Named parameters and the Adam optimizer state that travels with them.

use std::collections::BTreeMap;

use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Names starting with this prefix are reserved for serialized optimizer
/// state inside checkpoint files.
pub(crate) const OPT_PREFIX: &str = "__opt__/";

/// Adam hyperparameters. The defaults are the usual ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// A uniquely named set of trainable tensors plus per-parameter Adam moments
/// and a shared step counter. Owned by exactly one trainer at a time.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
    pub(crate) moments: BTreeMap<String, Moments>,
    pub(crate) step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore::default()
    }

    /// Register a parameter. Names must be unique and must not use the
    /// reserved optimizer prefix.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if name.starts_with(OPT_PREFIX) {
            return Err(Error::InvalidArgument(format!(
                "parameter name `{name}` uses the reserved prefix {OPT_PREFIX}"
            )));
        }
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        self.params.insert(name.to_string(), tensor.with_requires_grad());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    /// Parameter names in deterministic (sorted) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.clear_grad();
        }
    }

    /// One Adam update with bias correction over every parameter, then the
    /// step counter advances and all gradients are cleared.
    ///
    /// Every parameter must carry a populated gradient; a zero gradient with
    /// zero moments leaves the parameter value untouched.
    pub fn adam_step(&mut self, hp: AdamParams) -> Result<()> {
        for (name, t) in &self.params {
            if t.grad().is_none() {
                return Err(Error::MissingGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - hp.beta1.powi(t);
        let bias2 = 1.0 - hp.beta2.powi(t);
        for (name, tensor) in self.params.iter_mut() {
            let n = tensor.numel();
            let mom = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let grad = tensor.grad().expect("checked above").to_vec();
            let data = tensor.data_mut();
            for i in 0..n {
                let g = grad[i];
                mom.m[i] = hp.beta1 * mom.m[i] + (1.0 - hp.beta1) * g;
                mom.v[i] = hp.beta2 * mom.v[i] + (1.0 - hp.beta2) * g * g;
                let m_hat = mom.m[i] / bias1;
                let v_hat = mom.v[i] / bias2;
                data[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
            }
            tensor.clear_grad();
        }
        Ok(())
    }
}
