//! Small building blocks shared by extractors and heads.

use rand::Rng;

use crate::autodiff::{glorot_uniform, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Binds a parameter either as a trainable leaf or as a constant.
pub fn bind(tape: &mut Tape, store: &ParamStore, id: ParamId, frozen: bool) -> Result<Var> {
    if frozen {
        tape.frozen_param(store, id)
    } else {
        tape.param(store, id)
    }
}

/// `y = x W + b` with `W: [inputs x outputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = store.add(
            format!("{name}.w"),
            glorot_uniform(rng, &[inputs, outputs], inputs, outputs),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[outputs]), true);
        Dense { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, frozen: bool) -> Result<Var> {
        let w = bind(tape, store, self.w, frozen)?;
        let b = bind(tape, store, self.b, frozen)?;
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    pub fn outputs(&self, store: &ParamStore) -> usize {
        store.value(self.w).cols()
    }

    /// Rescales every output unit's weight vector (a column of `W`) whose
    /// l2 norm exceeds `s` back to norm `s`.
    pub fn max_norm(&self, store: &mut ParamStore, s: f64) {
        let w = store.value_mut(self.w);
        let (rows, cols) = w.dims2();
        for j in 0..cols {
            let norm = (0..rows).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt();
            if norm > s {
                let f = s / norm;
                for i in 0..rows {
                    w.data_mut()[i * cols + j] *= f;
                }
            }
        }
    }
}
