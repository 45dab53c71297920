use std::ops::Range;

use rand::Rng;

use crate::autodiff::{glorot_uniform, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::bind;

/// `u_t = tanh(h_t W + b)`, `alpha = softmax_t(u_t . u)`, `s = sum_t alpha_t h_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub context: ParamId,
}

impl AttentionParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, att_dim: usize, rng: &mut R) -> Self {
        AttentionParams {
            w: store.add(
                format!("{name}.w"),
                glorot_uniform(rng, &[input, att_dim], input, att_dim),
                true,
            ),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[att_dim]), true),
            context: store.add(
                format!("{name}.context"),
                glorot_uniform(rng, &[att_dim, 1], att_dim, 1),
                true,
            ),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b, self.context]
    }
}

/// Attention pooling of each row segment of `h: [n x H]`. Returns the pooled
/// rows `[segments x H]` and the weights `[n x 1]`.
pub fn attention_pool(
    tape: &mut Tape,
    store: &ParamStore,
    p: &AttentionParams,
    h: Var,
    segments: &[Range<usize>],
) -> Result<(Var, Var)> {
    if segments.is_empty() || tape.value(h).rows() == 0 {
        return Err(Error::empty("attention_pool", "sequence"));
    }
    let w = bind(tape, store, p.w, false)?;
    let b = bind(tape, store, p.b, false)?;
    let u = bind(tape, store, p.context, false)?;
    let hw = tape.matmul(h, w)?;
    let hw = tape.add(hw, b)?;
    let hidden = tape.tanh(hw)?;
    let scores = tape.matmul(hidden, u)?;
    let alpha = tape.segment_softmax(scores, segments)?;
    let s = tape.segment_weighted_sum(h, alpha, segments)?;
    Ok((s, alpha))
}
