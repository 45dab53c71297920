//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod equivalence;
pub mod fd;
pub mod oracles;

use dann::autodiff::Tensor;
use dann::data::Document;
use dann::embeddings::{load_embeddings, EmbeddingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

/// Tokens `w0 .. w{n-1}` with random `dim`-dimensional vectors.
pub fn toy_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng(seed);
    let mut text = format!("{n} {dim}\n");
    for i in 0..n {
        text.push_str(&format!("w{i}"));
        for _ in 0..dim {
            text.push_str(&format!(" {}", r.gen_range(-1.0..1.0)));
        }
        text.push('\n');
    }
    load_embeddings(text.as_bytes(), None).unwrap()
}

pub fn tokens(ids: &[usize]) -> Vec<String> {
    ids.iter().map(|i| format!("w{i}")).collect()
}

/// A document split into sentences of the given token ids.
pub fn doc(id: &str, sentences: &[&[usize]], label: Option<usize>, domain: usize) -> Document {
    let all: Vec<usize> = sentences.iter().flat_map(|s| s.iter().copied()).collect();
    let mut d = Document::new(id, tokens(&all), label, domain);
    let mut start = 0;
    d.sentences = sentences
        .iter()
        .map(|s| {
            let r = start..start + s.len();
            start += s.len();
            r
        })
        .collect();
    d
}

pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

/// A few hundred short documents: enough to train for a couple of epochs in
/// well under a second.
pub fn small_synth(seed: u64, n_source_domains: usize) -> dann::data::SynthData {
    let spec = dann::data::SynthSpec {
        vocab_size: 200,
        dim: 8,
        source_docs: 120,
        target_docs: 120,
        n_source_domains,
        ..dann::data::SynthSpec::default()
    };
    dann::data::synth_generate(&spec, seed).unwrap()
}

pub fn small_config(kind: dann::extractors::ExtractorKind, seed: u64) -> dann::trainer::DannConfig {
    let mut cfg = dann::bench::desk_config(kind, seed);
    cfg.extractor.dense_units = 8;
    cfg.extractor.cnn_maps = 4;
    cfg.extractor.gru_hidden = 4;
    cfg.extractor.max_len = 12;
    cfg.critic_hidden = 8;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg
}

pub fn small_plan(seed: u64) -> dann::data::SamplingPlan {
    dann::data::SamplingPlan {
        n_tgt: 20,
        seed,
        ..dann::data::SamplingPlan::default()
    }
}
