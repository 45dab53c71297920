//! Reverse-mode automatic differentiation on dense `f64` tensors.

pub mod gradcheck;
mod loss;
mod optim;
mod params;
mod tape;
mod tensor;

pub use loss::{cross_entropy, wasserstein_loss};
pub use optim::{adam_step, clip_params, clip_store, Adam, AdamState};
pub use params::{glorot_uniform, Param, ParamId, ParamStore};
pub use tape::{GraphNode, GrlConfig, Op, RowRef, Tape, Var};
pub use tensor::Tensor;

