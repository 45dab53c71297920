//! Feature extractors mapping embedded documents to fixed-length vectors:
//! embedding average, tf-idf weighted average, a convolutional network and a
//! hierarchical attention network.

mod attention;
mod gru;
mod idf;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use attention::{attention_pool, AttentionParams};
pub use gru::{gru_cell, run_gru, GruParams};
pub use idf::{fit_idf, IdfTable};

use crate::autodiff::{glorot_uniform, ParamId, ParamStore, RowRef, Tape, Tensor, Var};
use crate::data::{pad_or_truncate, Document};
use crate::embeddings::EmbeddingLayer;
use crate::error::{Error, Result};
use crate::nn::{bind, Dense};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Avg,
    Tfidf,
    Cnn,
    Han,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 4] = [ExtractorKind::Avg, ExtractorKind::Tfidf, ExtractorKind::Cnn, ExtractorKind::Han];

    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::Avg => "avg",
            ExtractorKind::Tfidf => "tfidf",
            ExtractorKind::Cnn => "cnn",
            ExtractorKind::Han => "han",
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExtractorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown extractor {s:?} (expected avg, tfidf, cnn or han)")))
    }
}

/// Architecture sizes. Defaults follow the reference architecture; the
/// synthetic benchmarks shrink them to keep single-core runs short.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    /// Units of the dense layer after avg/tfidf pooling.
    pub dense_units: usize,
    pub cnn_widths: Vec<usize>,
    pub cnn_maps: usize,
    pub cnn_dropout: f64,
    /// l2 bound on the label predictor's weight vectors (cnn only).
    pub cnn_max_norm: f64,
    /// GRU units per direction.
    pub gru_hidden: usize,
    /// Documents are truncated to this many tokens.
    pub max_len: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            kind: ExtractorKind::Avg,
            dense_units: 100,
            cnn_widths: vec![3, 4, 5],
            cnn_maps: 100,
            cnn_dropout: 0.5,
            cnn_max_norm: 3.0,
            gru_hidden: 100,
            max_len: 400,
        }
    }
}

impl ExtractorConfig {
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            ExtractorKind::Avg | ExtractorKind::Tfidf => self.dense_units,
            ExtractorKind::Cnn => self.cnn_widths.len() * self.cnn_maps,
            ExtractorKind::Han => 2 * self.gru_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.max_len == 0 {
            return fail("max_len must be > 0".into());
        }
        match self.kind {
            ExtractorKind::Avg | ExtractorKind::Tfidf if self.dense_units == 0 => fail("dense_units must be > 0".into()),
            ExtractorKind::Cnn if self.cnn_widths.is_empty() || self.cnn_widths.contains(&0) || self.cnn_maps == 0 => {
                fail("cnn needs non-empty filter widths and maps > 0".into())
            }
            ExtractorKind::Cnn if !(0.0..1.0).contains(&self.cnn_dropout) => {
                fail(format!("cnn dropout must be in [0, 1), got {}", self.cnn_dropout))
            }
            ExtractorKind::Han if self.gru_hidden == 0 => fail("gru_hidden must be > 0".into()),
            _ => Ok(()),
        }
    }
}

/// A document ready for the network: embedding row references, sentence
/// ranges and tf-idf weights, truncated to the configured length.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDoc {
    pub rows: Vec<RowRef>,
    pub sentences: Vec<Range<usize>>,
    /// `tf * idf / |x|` per position, or `1 / |x|` without an idf table.
    pub weights: Vec<f64>,
    pub label: Option<usize>,
    pub domain: usize,
}

impl EncodedDoc {
    pub fn encode(doc: &Document, emb: &EmbeddingLayer, idf: Option<&IdfTable>, max_len: usize) -> Result<Self> {
        if doc.is_empty() {
            return Err(Error::empty("encode", format!("document {}", doc.id)));
        }
        let n = doc.len().min(max_len);
        let tokens = &doc.tokens[..n];
        let sentences: Vec<Range<usize>> = doc
            .sentences
            .iter()
            .filter(|s| s.start < n)
            .map(|s| s.start..s.end.min(n))
            .collect();
        let weights = match idf {
            Some(t) => t.weights(tokens),
            None => vec![1.0 / n as f64; n],
        };
        Ok(EncodedDoc {
            rows: emb.rows(tokens),
            sentences,
            weights,
            label: doc.label,
            domain: doc.domain,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBank {
    pub width: usize,
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExtractorParams {
    Avg { dense: Dense },
    Tfidf { dense: Dense },
    Cnn { banks: Vec<ConvBank> },
    Han {
        word_fwd: GruParams,
        word_bwd: GruParams,
        word_att: AttentionParams,
        sent_fwd: GruParams,
        sent_bwd: GruParams,
        sent_att: AttentionParams,
    },
}

/// Attention weights from one HAN forward pass over a batch.
#[derive(Clone, Debug)]
pub struct HanAttention {
    /// `[tokens x 1]`, normalized within each sentence.
    pub word_alpha: Var,
    /// `[sentences x 1]`, normalized within each document.
    pub sent_alpha: Var,
    /// Token range of every sentence, in batch row order.
    pub sentence_rows: Vec<Range<usize>>,
    /// Sentence range of every document.
    pub doc_sentences: Vec<Range<usize>>,
}

#[derive(Clone, Debug)]
pub struct FeatureOut {
    /// `[batch x feature_dim]`
    pub z: Var,
    /// Pooled embeddings before the dense layer (avg and tfidf only).
    pub pooled: Option<Var>,
    pub attention: Option<HanAttention>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extractor {
    pub config: ExtractorConfig,
    pub params: ExtractorParams,
    /// Padded sequence length for the convolutional variant.
    pub seq_len: usize,
}

impl Extractor {
    /// Creates the parameters for embeddings of dimension `k`. `seq_len` is
    /// the padded document length used by the convolutional variant.
    pub fn new<R: Rng>(store: &mut ParamStore, config: &ExtractorConfig, k: usize, seq_len: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = match config.kind {
            ExtractorKind::Avg => ExtractorParams::Avg {
                dense: Dense::new(store, "F.dense", k, config.dense_units, rng),
            },
            ExtractorKind::Tfidf => ExtractorParams::Tfidf {
                dense: Dense::new(store, "F.dense", k, config.dense_units, rng),
            },
            ExtractorKind::Cnn => {
                let widest = *config.cnn_widths.iter().max().expect("validated");
                if seq_len < widest {
                    return Err(Error::config(format!(
                        "document length {seq_len} is shorter than the widest filter ({widest})"
                    )));
                }
                let banks = config
                    .cnn_widths
                    .iter()
                    .map(|&h| ConvBank {
                        width: h,
                        w: store.add(
                            format!("F.conv{h}.w"),
                            glorot_uniform(rng, &[h * k, config.cnn_maps], h * k, config.cnn_maps),
                            true,
                        ),
                        b: store.add(format!("F.conv{h}.b"), Tensor::zeros(&[config.cnn_maps]), true),
                    })
                    .collect();
                ExtractorParams::Cnn { banks }
            }
            ExtractorKind::Han => {
                let h = config.gru_hidden;
                ExtractorParams::Han {
                    word_fwd: GruParams::new(store, "F.word_fwd", k, h, rng),
                    word_bwd: GruParams::new(store, "F.word_bwd", k, h, rng),
                    word_att: AttentionParams::new(store, "F.word_att", 2 * h, 2 * h, rng),
                    sent_fwd: GruParams::new(store, "F.sent_fwd", 2 * h, h, rng),
                    sent_bwd: GruParams::new(store, "F.sent_bwd", 2 * h, h, rng),
                    sent_att: AttentionParams::new(store, "F.sent_att", 2 * h, 2 * h, rng),
                }
            }
        };
        Ok(Extractor {
            config: config.clone(),
            params,
            seq_len,
        })
    }

    pub fn kind(&self) -> ExtractorKind {
        self.config.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn params(&self) -> Vec<ParamId> {
        match &self.params {
            ExtractorParams::Avg { dense } | ExtractorParams::Tfidf { dense } => dense.params(),
            ExtractorParams::Cnn { banks } => banks.iter().flat_map(|b| [b.w, b.b]).collect(),
            ExtractorParams::Han {
                word_fwd,
                word_bwd,
                word_att,
                sent_fwd,
                sent_bwd,
                sent_att,
            } => [
                word_fwd.params(),
                word_bwd.params(),
                word_att.params(),
                sent_fwd.params(),
                sent_bwd.params(),
                sent_att.params(),
            ]
            .concat(),
        }
    }

    /// Features for a batch of documents. Dropout (cnn) draws from `rng` when
    /// the tape is in training mode.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        emb: &EmbeddingLayer,
        docs: &[&EncodedDoc],
        rng: &mut R,
    ) -> Result<FeatureOut> {
        if docs.is_empty() {
            return Err(Error::empty("extractor", "batch"));
        }
        if docs.iter().any(|d| d.is_empty()) {
            return Err(Error::empty("extractor", "document"));
        }
        match &self.params {
            ExtractorParams::Avg { dense } | ExtractorParams::Tfidf { dense } => {
                let x = embed_batch(tape, store, emb, docs, None)?;
                let weights: Vec<f64> = docs.iter().flat_map(|d| d.weights.iter().copied()).collect();
                let n = weights.len();
                let w = tape.constant(Tensor::matrix(n, 1, weights)?)?;
                let pooled = tape.segment_weighted_sum(x, w, &doc_segments(docs))?;
                let hidden = dense.forward(tape, store, pooled, false)?;
                Ok(FeatureOut {
                    z: tape.relu(hidden)?,
                    pooled: Some(pooled),
                    attention: None,
                })
            }
            ExtractorParams::Cnn { banks } => {
                let n = self.seq_len;
                let x = embed_batch(tape, store, emb, docs, Some(n))?;
                let mut pooled = Vec::with_capacity(banks.len());
                for bank in banks {
                    let w = bind(tape, store, bank.w, false)?;
                    let b = bind(tape, store, bank.b, false)?;
                    let c = tape.conv1d(x, w, bank.width, n)?;
                    let c = tape.add(c, b)?;
                    let c = tape.relu(c)?;
                    let steps = n - bank.width + 1;
                    let segs: Vec<Range<usize>> = (0..docs.len()).map(|i| i * steps..(i + 1) * steps).collect();
                    pooled.push(tape.segment_max(c, &segs)?);
                }
                let z = tape.concat(&pooled, 1)?;
                let z = tape.dropout(z, self.config.cnn_dropout, rng)?;
                Ok(FeatureOut {
                    z,
                    pooled: None,
                    attention: None,
                })
            }
            ExtractorParams::Han {
                word_fwd,
                word_bwd,
                word_att,
                sent_fwd,
                sent_bwd,
                sent_att,
            } => {
                let x = embed_batch(tape, store, emb, docs, None)?;
                let mut sentence_rows = Vec::new();
                let mut doc_sentences = Vec::with_capacity(docs.len());
                let mut offset = 0;
                for d in docs {
                    if d.sentences.is_empty() || d.sentences.iter().any(|s| s.is_empty()) {
                        return Err(Error::empty("han", "sentence"));
                    }
                    let first = sentence_rows.len();
                    sentence_rows.extend(d.sentences.iter().map(|s| offset + s.start..offset + s.end));
                    doc_sentences.push(first..sentence_rows.len());
                    offset += d.len();
                }
                let f = run_gru(tape, store, word_fwd, x, &sentence_rows, false)?;
                let b = run_gru(tape, store, word_bwd, x, &sentence_rows, true)?;
                let hw = tape.concat(&[f, b], 1)?;
                let (sent_vecs, word_alpha) = attention_pool(tape, store, word_att, hw, &sentence_rows)?;
                let f = run_gru(tape, store, sent_fwd, sent_vecs, &doc_sentences, false)?;
                let b = run_gru(tape, store, sent_bwd, sent_vecs, &doc_sentences, true)?;
                let hs = tape.concat(&[f, b], 1)?;
                let (z, sent_alpha) = attention_pool(tape, store, sent_att, hs, &doc_sentences)?;
                Ok(FeatureOut {
                    z,
                    pooled: None,
                    attention: Some(HanAttention {
                        word_alpha,
                        sent_alpha,
                        sentence_rows,
                        doc_sentences,
                    }),
                })
            }
        }
    }
}

fn doc_segments(docs: &[&EncodedDoc]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(docs.len());
    let mut start = 0;
    for d in docs {
        out.push(start..start + d.len());
        start += d.len();
    }
    out
}

/// Stacks the embedded rows of every document (each padded or truncated to
/// `pad_to` when given), applying each document's domain projection.
pub fn embed_batch(
    tape: &mut Tape,
    store: &ParamStore,
    emb: &EmbeddingLayer,
    docs: &[&EncodedDoc],
    pad_to: Option<usize>,
) -> Result<Var> {
    let rows_of = |d: &EncodedDoc| match pad_to {
        Some(n) => pad_or_truncate(&d.rows, n, RowRef::Pad),
        None => d.rows.clone(),
    };
    let mut parts = Vec::new();
    let mut i = 0;
    while i < docs.len() {
        let domain = docs[i].domain;
        let proj = emb.projection(domain);
        let mut j = i;
        let mut rows = Vec::new();
        // Without projections every domain shares one lookup.
        while j < docs.len() && (proj.is_none() && emb.projection(docs[j].domain).is_none() || docs[j].domain == domain) {
            rows.extend(rows_of(docs[j]));
            j += 1;
        }
        parts.push(emb.embed_rows(tape, store, rows, domain)?);
        i = j;
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat(&parts, 0)
    }
}
