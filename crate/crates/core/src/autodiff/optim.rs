use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One named tensor with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Frozen tensors are bound as constants and skipped by optimizers.
    pub trainable: bool,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Param {
    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let len = value.len();
        self.params.push(Param { name, value, trainable, m: vec![0.0; len], v: vec![0.0; len], step: 0 });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.params[i].value)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    /// Replaces a tensor's value, keeping its shape. Optimizer state resets.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.index_of(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        let p = &mut self.params[i];
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "parameter {name}: shape {:?} expected, got {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        p.m.fill(0.0);
        p.v.fill(0.0);
        p.step = 0;
        Ok(())
    }

    /// Replaces a tensor with one of any shape and fresh optimizer state.
    pub fn replace(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.index_of(name).ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        let len = value.len();
        let p = &mut self.params[i];
        p.value = value;
        p.m = vec![0.0; len];
        p.v = vec![0.0; len];
        p.step = 0;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn set_trainable(&mut self, mut pred: impl FnMut(&str) -> bool) {
        for p in &mut self.params {
            p.trainable = pred(&p.name);
        }
    }

    /// Clears moments and step counts, keeping values.
    pub fn reset_state(&mut self) {
        for p in &mut self.params {
            p.m.fill(0.0);
            p.v.fill(0.0);
            p.step = 0;
        }
    }

    /// Places every tensor on the tape; trainable ones as differentiable leaves.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if p.trainable { tape.param(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect()
    }

    /// Gradients for `vars` as returned by [`ParamSet::bind`], aligned with this set.
    pub fn collect_grads(&self, grads: &Gradients, vars: &[Var]) -> Vec<Option<Tensor>> {
        self.params.iter().zip(vars).map(|(p, &v)| if p.trainable { grads.get(v).cloned() } else { None }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

fn check_aligned(params: &ParamSet, grads: &[Option<Tensor>]) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    for (p, g) in params.params.iter().zip(grads) {
        if let Some(g) = g {
            if g.shape() != p.value.shape() {
                return Err(Error::Shape(format!("gradient for {} has shape {:?}", p.name, g.shape())));
            }
        }
    }
    Ok(())
}

struct Update {
    index: usize,
    value: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Applies staged updates only when every one of them is finite.
fn commit(params: &mut ParamSet, updates: Vec<Update>) -> Result<()> {
    for u in &updates {
        if u.value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(params.params[u.index].name.clone()));
        }
    }
    for u in updates {
        let p = &mut params.params[u.index];
        p.value.data_mut().copy_from_slice(&u.value);
        p.m = u.m;
        p.v = u.v;
        p.step += 1;
    }
    Ok(())
}

/// Bias-corrected Adam. Frozen parameters and `None` gradients are skipped.
pub fn adam_step(params: &mut ParamSet, grads: &[Option<Tensor>], lr: f64, cfg: AdamConfig) -> Result<()> {
    check_aligned(params, grads)?;
    let mut updates = Vec::new();
    for (index, (p, g)) in params.params.iter().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        if !p.trainable {
            continue;
        }
        let t = (p.step + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let mut u = Update { index, value: p.value.data().to_vec(), m: p.m.clone(), v: p.v.clone() };
        for (k, &gk) in g.data().iter().enumerate() {
            u.m[k] = cfg.beta1 * u.m[k] + (1.0 - cfg.beta1) * gk;
            u.v[k] = cfg.beta2 * u.v[k] + (1.0 - cfg.beta2) * gk * gk;
            let mhat = u.m[k] / c1;
            let vhat = u.v[k] / c2;
            u.value[k] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        updates.push(u);
    }
    commit(params, updates)
}

/// Plain gradient descent.
pub fn sgd_step(params: &mut ParamSet, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
    check_aligned(params, grads)?;
    let mut updates = Vec::new();
    for (index, (p, g)) in params.params.iter().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        if !p.trainable {
            continue;
        }
        let value = p.value.data().iter().zip(g.data()).map(|(x, d)| x - lr * d).collect();
        updates.push(Update { index, value, m: p.m.clone(), v: p.v.clone() });
    }
    commit(params, updates)
}
