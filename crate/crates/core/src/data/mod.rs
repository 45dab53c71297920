//! Corpora, tokenization, sampling plans, batching and a synthetic
//! domain-shift generator.

mod batch;
mod document;
mod jsonl;
mod rating;
mod splits;
pub mod synth;
mod tokenize;

pub use batch::{batch_iter, pad_or_truncate, BatchIter};
pub use document::{Corpus, Document};
pub use jsonl::{load_jsonl, load_jsonl_reader, JsonlSchema, LoadReport};
pub use rating::{map_rating, RatingScheme};
pub use splits::{make_splits, CorpusStats, Manifest, PreparedData, SamplingPlan};
pub use synth::{synth_generate, ShiftMode, SynthData, SynthSpec};
pub use tokenize::{tokenize, Tokenized};
