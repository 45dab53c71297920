use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::vocab::Vocabulary;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Word vectors, one row per vocabulary entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, matrix: Tensor) -> Result<Self> {
        let (rows, k) = matrix.dims2();
        if matrix.rank() != 2 || rows != vocab.len() {
            return Err(Error::invalid(format!(
                "embedding matrix {:?} does not match vocabulary of {}",
                matrix.shape(),
                vocab.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("embedding dimensionality must be > 0"));
        }
        Ok(EmbeddingTable {
            vocab,
            matrix,
            trainable: false,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.get(token).map(|i| self.matrix.row(i))
    }

    /// Writes the word-vector text format with a `<count> <dim>` header.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim())?;
        for (i, tok) in self.vocab.tokens().iter().enumerate() {
            write!(w, "{tok}")?;
            for v in self.matrix.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
}

/// Parses word vectors: an optional `<count> <dim>` header, then one
/// `token v1 .. vK` line per word. K comes from the first vector line.
/// With `restrict_to`, other tokens are skipped. Repeated tokens keep their
/// first vector.
pub fn load_embeddings<R: BufRead>(reader: R, restrict_to: Option<&Vocabulary>) -> Result<EmbeddingTable> {
    let mut vocab = Vocabulary::new();
    let mut data = Vec::new();
    let mut k: Option<usize> = None;
    let mut seen_content = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if is_header(&fields) {
                continue;
            }
        }
        let dim = fields.len() - 1;
        match k {
            None if dim == 0 => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "vector line has no values".into(),
                })
            }
            None => k = Some(dim),
            Some(k) if k != dim => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {k} values, found {dim}"),
                })
            }
            Some(_) => {}
        }
        let mut row = Vec::with_capacity(dim);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric value {f:?}"),
            })?;
            row.push(v);
        }
        let token = fields[0];
        if restrict_to.is_some_and(|r| !r.contains(token)) || vocab.contains(token) {
            continue;
        }
        vocab.insert(token);
        data.extend(row);
    }
    let k = k.ok_or_else(|| Error::empty("load_embeddings", "vector stream"))?;
    let matrix = Tensor::matrix(vocab.len(), k, data)?;
    EmbeddingTable::new(vocab, matrix)
}

pub fn load_embeddings_file(path: impl AsRef<Path>, restrict_to: Option<&Vocabulary>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    load_embeddings(BufReader::new(f), restrict_to)
}
