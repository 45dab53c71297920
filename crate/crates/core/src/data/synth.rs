//! Synthetic corpora with a controlled domain shift.
//!
//! Every domain draws documents from the same class-conditional token
//! process over `vocab_size` abstract token ids. Domains differ only in how
//! ids are rendered and embedded: domain `d` writes id `j` as `d{d}_{j}`.
//!
//! * Lexical swap: each domain's vectors are the base vectors plus a
//!   domain offset, so synonyms share their covariance but not their mean.
//! * Rotation: the target domain's vectors are the base vectors under a
//!   random orthogonal map, mimicking two monolingual spaces trained apart.

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::document::{Corpus, Document};
use crate::autodiff::Tensor;
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    LexicalSwap,
    Rotation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Token ids per domain.
    pub vocab_size: usize,
    pub dim: usize,
    pub n_classes: usize,
    /// Documents per source domain.
    pub source_docs: usize,
    pub target_docs: usize,
    pub n_source_domains: usize,
    pub shift: ShiftMode,
    pub min_len: usize,
    pub max_len: usize,
    pub min_sentence: usize,
    pub max_sentence: usize,
    /// Share of the vocabulary that is class-indicative, split evenly over classes.
    pub class_token_frac: f64,
    /// Probability that a token comes from the document's class pool.
    pub class_prob: f64,
    pub n_topics: usize,
    /// Probability that a token comes from the document's topic pool.
    pub topic_prob: f64,
    /// Zipf exponent of token frequencies within a pool.
    pub zipf: f64,
    /// Norm of the class direction in class-token vectors.
    pub signal: f64,
    pub topic_scale: f64,
    pub noise: f64,
    /// Norm of the per-domain offset in lexical-swap mode.
    pub shift_scale: f64,
    /// Cosine between a domain offset and the first class direction.
    pub shift_alignment: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 2000,
            dim: 32,
            n_classes: 2,
            source_docs: 2000,
            target_docs: 2000,
            n_source_domains: 1,
            shift: ShiftMode::LexicalSwap,
            min_len: 12,
            max_len: 30,
            min_sentence: 4,
            max_sentence: 10,
            class_token_frac: 0.2,
            class_prob: 0.25,
            n_topics: 20,
            topic_prob: 0.5,
            zipf: 1.0,
            signal: 1.0,
            topic_scale: 1.0,
            noise: 0.5,
            shift_scale: 1.0,
            shift_alignment: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(format!("synthetic spec: {m}")));
        if self.vocab_size == 0 || self.dim == 0 {
            return fail("vocab_size and dim must be > 0");
        }
        if self.n_classes < 2 {
            return fail("need at least two classes");
        }
        if self.n_source_domains == 0 {
            return fail("need at least one source domain");
        }
        if self.shift == ShiftMode::Rotation && self.n_source_domains != 1 {
            return fail("rotation mode supports exactly one source domain");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail("document length range is empty");
        }
        if self.min_sentence == 0 || self.min_sentence > self.max_sentence {
            return fail("sentence length range is empty");
        }
        if self.n_topics == 0 {
            return fail("need at least one topic");
        }
        let per_class = self.class_tokens_per_class();
        if per_class == 0 || per_class * self.n_classes + self.n_topics > self.vocab_size {
            return fail("class_token_frac leaves no room for class or topic tokens");
        }
        let probs = [self.class_prob, self.topic_prob, self.class_prob + self.topic_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("class_prob and topic_prob must be probabilities summing to at most 1");
        }
        if !(-1.0..=1.0).contains(&self.shift_alignment) {
            return fail("shift_alignment must lie in [-1, 1]");
        }
        if self.source_docs == 0 || self.target_docs == 0 {
            return fail("every domain needs documents");
        }
        Ok(())
    }

    fn class_tokens_per_class(&self) -> usize {
        ((self.vocab_size as f64 * self.class_token_frac) / self.n_classes as f64).round() as usize
    }

    pub fn n_domains(&self) -> usize {
        self.n_source_domains + 1
    }
}

/// Generated corpus plus the embedding tables that go with it.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub corpus: Corpus,
    pub target_domain: usize,
    /// Vectors for every domain's tokens, shift included.
    pub table: EmbeddingTable,
    /// Same vocabulary with every domain mapped back onto the base vectors.
    pub aligned_table: EmbeddingTable,
    /// The target rotation in rotation mode.
    pub rotation: Option<Tensor>,
    /// Offset added to each domain's vectors in lexical-swap mode.
    pub offsets: Vec<Vec<f64>>,
}

impl SynthData {
    pub fn token(domain: usize, id: usize) -> String {
        format!("d{domain}_{id}")
    }
}

/// Token pools and the base vector of each token id.
struct Lexicon {
    class_pools: Vec<Vec<usize>>,
    topic_pools: Vec<Vec<usize>>,
    neutral: Vec<usize>,
    vectors: Vec<Vec<f64>>,
    class_dirs: Vec<Vec<f64>>,
}

fn normal_vec<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, k);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Haar-distributed random orthogonal matrix via QR with sign correction.
pub fn random_orthogonal<R: Rng>(rng: &mut R, k: usize) -> Tensor {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let data = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| q[(i, j)]).collect();
    Tensor::matrix(k, k, data).expect("square")
}

fn build_lexicon<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Lexicon {
    let k = spec.dim;
    let per_class = spec.class_tokens_per_class();
    let class_dirs: Vec<Vec<f64>> = if spec.n_classes == 2 {
        let u = unit(rng, k);
        vec![u.iter().map(|x| -x).collect(), u]
    } else {
        (0..spec.n_classes).map(|_| unit(rng, k)).collect()
    };
    let topic_centers: Vec<Vec<f64>> = (0..spec.n_topics).map(|_| unit(rng, k)).collect();
    let mut class_pools = vec![Vec::new(); spec.n_classes];
    let mut topic_pools = vec![Vec::new(); spec.n_topics];
    let mut neutral = Vec::new();
    let mut vectors = Vec::with_capacity(spec.vocab_size);
    for j in 0..spec.vocab_size {
        let noise = normal_vec(rng, k);
        let (center, scale) = if j < per_class * spec.n_classes {
            let c = j % spec.n_classes;
            class_pools[c].push(j);
            (&class_dirs[c], spec.signal)
        } else {
            let t = (j - per_class * spec.n_classes) % spec.n_topics;
            topic_pools[t].push(j);
            neutral.push(j);
            (&topic_centers[t], spec.topic_scale)
        };
        vectors.push(
            center
                .iter()
                .zip(&noise)
                .map(|(c, n)| scale * c + spec.noise * n)
                .collect(),
        );
    }
    Lexicon {
        class_pools,
        topic_pools,
        neutral,
        vectors,
        class_dirs,
    }
}

fn zipf_sampler(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(s))).expect("non-empty pool")
}

/// Generates the corpus for all domains (sources first, target last) and the
/// matching embedding tables.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let k = spec.dim;
    let mut lex_rng = rng::stream(seed, "synth.lexicon");
    let lex = build_lexicon(spec, &mut lex_rng);
    let n_domains = spec.n_domains();
    let target = n_domains - 1;

    let mut offsets = vec![vec![0.0; k]; n_domains];
    let mut rotation = None;
    match spec.shift {
        ShiftMode::LexicalSwap => {
            let u = &lex.class_dirs[1 % spec.n_classes];
            for (d, off) in offsets.iter_mut().enumerate().skip(1) {
                let mut g = unit(&mut lex_rng, k);
                let proj: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
                g.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
                let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                let a = spec.shift_alignment;
                // Alternate the sign so that domains do not all lean the same way.
                let sign = if d % 2 == 1 { 1.0 } else { -1.0 };
                let b = (1.0 - a * a).sqrt();
                *off = u
                    .iter()
                    .zip(&g)
                    .map(|(ui, gi)| spec.shift_scale * (sign * a * ui + b * gi / gn))
                    .collect();
            }
        }
        ShiftMode::Rotation => rotation = Some(random_orthogonal(&mut lex_rng, k)),
    }

    let mut vocab = Vocabulary::new();
    let mut data = Vec::with_capacity(n_domains * spec.vocab_size * k);
    let mut aligned = Vec::with_capacity(n_domains * spec.vocab_size * k);
    for (d, off) in offsets.iter().enumerate() {
        for (j, e) in lex.vectors.iter().enumerate() {
            vocab.insert(SynthData::token(d, j));
            aligned.extend_from_slice(e);
            match (&rotation, d == target) {
                (Some(r), true) => {
                    for i in 0..k {
                        data.push(r.row(i).iter().zip(e).map(|(a, b)| a * b).sum());
                    }
                }
                _ => data.extend(e.iter().zip(off).map(|(a, b)| a + b)),
            }
        }
    }
    let rows = vocab.len();
    let table = EmbeddingTable::new(vocab.clone(), Tensor::matrix(rows, k, data)?)?;
    let aligned_table = EmbeddingTable::new(vocab, Tensor::matrix(rows, k, aligned)?)?;

    let class_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    let domain_names = (0..n_domains)
        .map(|d| if d == target { "target".to_string() } else { format!("source{d}") })
        .collect();
    let mut corpus = Corpus::new(class_names, domain_names);
    let class_samplers: Vec<_> = lex.class_pools.iter().map(|p| zipf_sampler(p.len(), spec.zipf)).collect();
    let topic_samplers: Vec<_> = lex.topic_pools.iter().map(|p| zipf_sampler(p.len(), spec.zipf)).collect();
    let neutral_sampler = zipf_sampler(lex.neutral.len(), spec.zipf);
    for d in 0..n_domains {
        let mut doc_rng = rng::stream(seed, &format!("synth.docs.{d}"));
        let n = if d == target { spec.target_docs } else { spec.source_docs };
        for i in 0..n {
            let y = doc_rng.gen_range(0..spec.n_classes);
            let topic = doc_rng.gen_range(0..spec.n_topics);
            let len = doc_rng.gen_range(spec.min_len..=spec.max_len);
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let u: f64 = doc_rng.gen();
                let id = if u < spec.class_prob {
                    lex.class_pools[y][class_samplers[y].sample(&mut doc_rng)]
                } else if u < spec.class_prob + spec.topic_prob {
                    lex.topic_pools[topic][topic_samplers[topic].sample(&mut doc_rng)]
                } else {
                    lex.neutral[neutral_sampler.sample(&mut doc_rng)]
                };
                tokens.push(SynthData::token(d, id));
            }
            let mut sentences = Vec::new();
            let mut start = 0;
            while start < len {
                let l = doc_rng.gen_range(spec.min_sentence..=spec.max_sentence);
                let end = (start + l).min(len);
                sentences.push(start..end);
                start = end;
            }
            let text = sentences
                .iter()
                .map(|s| tokens[s.clone()].join(" "))
                .collect::<Vec<_>>()
                .join(" . ");
            corpus.documents.push(Document {
                id: format!("d{d}-{i}"),
                tokens,
                sentences,
                label: Some(y),
                domain: d,
                text,
            });
        }
    }
    Ok(SynthData {
        spec: spec.clone(),
        corpus,
        target_domain: target,
        table,
        aligned_table,
        rotation,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            vocab_size: 200,
            dim: 8,
            source_docs: 50,
            target_docs: 40,
            n_topics: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let a = synth_generate(&small(), 3).unwrap();
        assert_eq!(a.corpus.len(), 90);
        assert_eq!(a.table.len(), 400);
        a.corpus.validate().unwrap();
        let b = synth_generate(&small(), 3).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.table, b.table);
        assert!(a.corpus.documents.iter().all(|d| d.tokens[0].starts_with(&format!("d{}_", d.domain))));
    }

    #[test]
    fn rotation_is_orthogonal() {
        let spec = SynthSpec {
            shift: ShiftMode::Rotation,
            ..small()
        };
        let s = synth_generate(&spec, 1).unwrap();
        let r = s.rotation.unwrap();
        let rtr = r.transpose().matmul(&r).unwrap();
        let eye = Tensor::identity(8);
        let err = rtr.data().iter().zip(eye.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn inconsistent_spec_fails() {
        for bad in [
            SynthSpec { min_len: 5, max_len: 2, ..small() },
            SynthSpec { class_prob: 0.7, topic_prob: 0.5, ..small() },
            SynthSpec { n_classes: 1, ..small() },
            SynthSpec { shift: ShiftMode::Rotation, n_source_domains: 2, ..small() },
        ] {
            assert!(synth_generate(&bad, 0).is_err());
        }
    }
}
