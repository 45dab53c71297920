use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-parameter Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState, lr: f64) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    if state.m.shape() != param.shape() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: param.shape().to_vec(),
            rhs: state.m.shape().to_vec(),
        });
    }
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let m = state.m.data_mut();
    for (mi, g) in m.iter_mut().zip(grad.data()) {
        *mi = b1 * *mi + (1.0 - b1) * g;
    }
    let v = state.v.data_mut();
    for (vi, g) in v.iter_mut().zip(grad.data()) {
        *vi = b2 * *vi + (1.0 - b2) * g * g;
    }
    for ((p, m), v) in param.data_mut().iter_mut().zip(state.m.data()).zip(state.v.data()) {
        let m_hat = m / c1;
        let v_hat = v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Adam over a fixed group of parameters in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    params: Vec<ParamId>,
    states: HashMap<ParamId, AdamState>,
}

impl Adam {
    pub fn new(lr: f64, params: Vec<ParamId>) -> Self {
        Adam {
            lr,
            params,
            states: HashMap::new(),
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn state(&self, id: ParamId) -> Option<&AdamState> {
        self.states.get(&id)
    }

    /// Applies the accumulated gradients to every trainable parameter of the
    /// group. Gradients are left in place.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for &id in &self.params {
            if !store.is_trainable(id) {
                continue;
            }
            let grad = store.grad(id).clone();
            let state = self
                .states
                .entry(id)
                .or_insert_with(|| AdamState::new(grad.shape()));
            adam_step(store.value_mut(id), &grad, state, self.lr)?;
        }
        Ok(())
    }

    pub fn zero_grad(&self, store: &mut ParamStore) {
        store.zero_grad(&self.params);
    }
}

/// Clamps every element into `[-c, c]`.
pub fn clip_params(params: &mut [&mut Tensor], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("clip bound must be > 0, got {c}")));
    }
    for t in params.iter_mut() {
        for v in t.data_mut() {
            *v = v.clamp(-c, c);
        }
    }
    Ok(())
}

/// [`clip_params`] applied to parameters held in a store.
pub fn clip_store(store: &mut ParamStore, ids: &[ParamId], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("clip bound must be > 0, got {c}")));
    }
    for &id in ids {
        clip_params(&mut [store.value_mut(id)], c)?;
    }
    Ok(())
}
