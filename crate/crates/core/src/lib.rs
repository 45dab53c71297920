pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod extractors;
pub mod nn;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
