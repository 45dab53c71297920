use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::Document;
use crate::error::{Error, Result};

/// Smoothed inverse document frequencies of one domain's training documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_docs: usize,
    pub df: HashMap<String, usize>,
}

impl IdfTable {
    /// `ln((1 + N) / (1 + df)) + 1`; unseen tokens have `df = 0`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    /// Per-position weights `tf(w_i) * idf(w_i) / |x|` of a token sequence.
    pub fn weights(&self, tokens: &[String]) -> Vec<f64> {
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        let n = tokens.len() as f64;
        tokens
            .iter()
            .map(|t| tf[t.as_str()] as f64 * self.idf(t) / n)
            .collect()
    }
}

pub fn fit_idf<'a, I>(docs: I) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut n_docs = 0;
    for d in docs {
        n_docs += 1;
        let uniq: HashSet<&String> = d.tokens.iter().collect();
        for t in uniq {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::empty("fit_idf", "corpus"));
    }
    Ok(IdfTable { n_docs, df })
}
