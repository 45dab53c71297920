//! Random small instances (at most 10 elements each) compared against the
//! brute-force oracles. Each case returns the largest absolute difference.

use dann::autodiff::{ParamStore, Tape, Tensor};
use dann::data::Document;
use dann::diagnostics::{normalize_attention, sep_metric, FeatureGroup};
use dann::embeddings::{hausdorff_directed, hausdorff_undirected, EmbeddingLayer};
use dann::extractors::{fit_idf, EncodedDoc, Extractor, ExtractorKind};
use dann::trainer::{multi_domain_critic_loss, CriticLoss};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::fd::toy_extractor_config;
use super::{oracles, random_points, rng, tokens, toy_table};

pub const TRIALS: usize = 200;

fn tfidf(r: &mut ChaCha8Rng) -> f64 {
    let vocab = r.gen_range(1..=10);
    let table = toy_table(vocab, 3, r.gen());
    let n_docs = r.gen_range(1..=10);
    let corpus: Vec<Vec<usize>> = (0..n_docs)
        .map(|_| (0..r.gen_range(1..=10)).map(|_| r.gen_range(0..vocab)).collect())
        .collect();
    let docs: Vec<Document> = corpus
        .iter()
        .enumerate()
        .map(|(i, ids)| Document::new(format!("d{i}"), tokens(ids), None, 0))
        .collect();
    let idf = fit_idf(&docs).unwrap();
    let mut store = ParamStore::new();
    let emb = EmbeddingLayer::bind(&mut store, &table, false);
    let ex = Extractor::new(&mut store, &toy_extractor_config(ExtractorKind::Tfidf), 3, 10, r).unwrap();

    let names: Vec<Vec<String>> = corpus.iter().map(|ids| tokens(ids)).collect();
    let refs: Vec<Vec<&str>> = names.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
    let vectors = |w: &str| table.vector(w).unwrap().to_vec();
    let mut worst: f64 = 0.0;
    for (d, words) in docs.iter().zip(&refs) {
        let enc = EncodedDoc::encode(d, &emb, Some(&idf), 10).unwrap();
        let mut tape = Tape::eval();
        let out = ex.forward(&mut tape, &store, &emb, &[&enc], r).unwrap();
        let got = tape.value(out.pooled.unwrap()).data().to_vec();
        let want = oracles::tfidf_pooled(words, &refs, &vectors);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn sep(r: &mut ChaCha8Rng) -> f64 {
    let n_groups = r.gen_range(2..=4);
    let dim = r.gen_range(1..=4);
    let mut groups: Vec<FeatureGroup> = (0..n_groups)
        .map(|id| FeatureGroup {
            id: id * 3 + 1,
            points: {
                let n = r.gen_range(1..=10 / n_groups);
                random_points(r, n, dim)
            },
        })
        .collect();
    let want = oracles::sep(&groups.iter().map(|g| g.points.clone()).collect::<Vec<_>>());
    groups.shuffle(r);
    (sep_metric(&groups).unwrap() - want).abs()
}

fn hausdorff(r: &mut ChaCha8Rng) -> f64 {
    let dim = r.gen_range(1..=4);
    let (na, nb) = (r.gen_range(1..=10), r.gen_range(1..=10));
    let a = random_points(r, na, dim);
    let b = random_points(r, nb, dim);
    let d = (hausdorff_directed(&a, &b).unwrap() - oracles::hausdorff_directed(&a, &b)).abs();
    let u = (hausdorff_undirected(&a, &b).unwrap() - oracles::hausdorff_undirected(&a, &b)).abs();
    d.max(u)
}

fn critic_loss(r: &mut ChaCha8Rng) -> f64 {
    let n_domains = r.gen_range(3..=5);
    let batch = r.gen_range(2..=10 / n_domains * n_domains).max(2);
    let mut labels: Vec<usize> = (0..batch).map(|_| r.gen_range(0..n_domains)).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        labels[0] = (labels[0] + 1) % n_domains;
    }
    let scores: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..n_domains).map(|_| r.gen_range(-3.0..3.0)).collect())
        .collect();
    let flat: Vec<f64> = scores.iter().flatten().copied().collect();
    let mut worst: f64 = 0.0;
    for (mode, want) in [
        (CriticLoss::Wasserstein, oracles::one_vs_rest(&scores, &labels, n_domains)),
        (CriticLoss::Ce, oracles::cross_entropy(&scores, &labels)),
    ] {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::matrix(batch, n_domains, flat.clone()).unwrap()).unwrap();
        let l = multi_domain_critic_loss(&mut tape, s, &labels, n_domains, mode).unwrap();
        worst = worst.max((tape.value(l).item().unwrap() - want).abs());
    }
    worst
}

fn attention(r: &mut ChaCha8Rng) -> f64 {
    let n_sent = r.gen_range(1..=4);
    let normalize = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let sentence = normalize((0..n_sent).map(|_| r.gen_range(0.01..1.0)).collect());
    let words: Vec<Vec<f64>> = (0..n_sent)
        .map(|_| normalize((0..r.gen_range(1..=10 / n_sent)).map(|_| r.gen_range(0.01..1.0)).collect()))
        .collect();
    let got = normalize_attention(&sentence, &words).unwrap().normalized;
    let want = oracles::normalized_attention(&sentence, &words);
    got.iter()
        .flatten()
        .zip(want.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(name, max |library - oracle|)` over [`TRIALS`] instances per case.
pub fn all_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let cases: [(&'static str, fn(&mut ChaCha8Rng) -> f64); 5] = [
        ("tf-idf features", tfidf),
        ("sep metric", sep),
        ("hausdorff", hausdorff),
        ("multi-domain critic loss", critic_loss),
        ("normalized attention", attention),
    ];
    let mut r = rng(seed);
    cases
        .iter()
        .map(|&(name, f)| (name, (0..TRIALS).map(|_| f(&mut r)).fold(0.0, f64::max)))
        .collect()
}
