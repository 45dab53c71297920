//! Word vectors, per-domain projections and Hausdorff distances between
//! embedding spaces.

mod hausdorff;
mod projection;
mod table;
mod vocab;

pub use hausdorff::{hausdorff_directed, hausdorff_undirected, top_k_by_frequency};
pub use projection::ProjectionMatrix;
pub use table::{load_embeddings, load_embeddings_file, EmbeddingTable};
pub use vocab::Vocabulary;

use crate::autodiff::{ParamId, ParamStore, RowRef, Tape, Var};
use crate::error::{Error, Result};

/// Embedding parameters bound into a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct EmbeddingLayer {
    pub vocab: Vocabulary,
    pub table: ParamId,
    pub oov: ParamId,
    /// One optional `K x K` projection per domain.
    pub projections: Vec<Option<ParamId>>,
}

impl EmbeddingLayer {
    /// Registers `table` (and a zero OOV vector) in `store`.
    pub fn bind(store: &mut ParamStore, table: &EmbeddingTable, trainable_oov: bool) -> Self {
        let k = table.dim();
        let t = store.add("embed.table", table.matrix().clone(), table.trainable);
        let oov = store.add("embed.oov", crate::autodiff::Tensor::zeros(&[k]), trainable_oov);
        EmbeddingLayer {
            vocab: table.vocab().clone(),
            table: t,
            oov,
            projections: Vec::new(),
        }
    }

    pub fn dim(&self, store: &ParamStore) -> usize {
        store.value(self.table).cols()
    }

    /// Adds an identity-initialised projection for each of `n_domains`.
    pub fn add_projections(&mut self, store: &mut ParamStore, n_domains: usize, freeze_domain: Option<usize>) {
        let k = self.dim(store);
        self.projections = (0..n_domains)
            .map(|d| {
                let p = ProjectionMatrix::identity(d, k);
                Some(store.add(format!("proj.{d}"), p.weights, freeze_domain != Some(d)))
            })
            .collect();
    }

    pub fn rows(&self, tokens: &[String]) -> Vec<RowRef> {
        tokens
            .iter()
            .map(|t| match self.vocab.get(t) {
                Some(i) => RowRef::Token(i),
                None => RowRef::Oov,
            })
            .collect()
    }

    pub fn projection(&self, domain: usize) -> Option<ParamId> {
        self.projections.get(domain).copied().flatten()
    }

    /// Looks up `rows` and applies the domain's projection, if any.
    pub fn embed_rows(&self, tape: &mut Tape, store: &ParamStore, rows: Vec<RowRef>, domain: usize) -> Result<Var> {
        embed(tape, store, self.table, self.oov, rows, self.projection(domain))
    }
}

/// `[|x| x K]` matrix whose row `t` is the vector of token `t` (or the OOV
/// vector), multiplied by `proj` when given.
pub fn embed(
    tape: &mut Tape,
    store: &ParamStore,
    table: ParamId,
    oov: ParamId,
    rows: Vec<RowRef>,
    proj: Option<ParamId>,
) -> Result<Var> {
    if rows.is_empty() {
        return Err(Error::empty("embed", "document"));
    }
    let x = tape.embed(store, table, oov, rows)?;
    match proj {
        None => Ok(x),
        Some(p) => {
            let w = tape.param(store, p)?;
            tape.matmul_nt(x, w)
        }
    }
}
