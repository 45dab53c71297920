use std::io::{BufRead, Write};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Learned `K x K` map taking one domain's word vectors into the shared space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    pub domain: usize,
    pub weights: Tensor,
    pub trainable: bool,
}

impl ProjectionMatrix {
    pub fn identity(domain: usize, k: usize) -> Self {
        ProjectionMatrix {
            domain,
            weights: Tensor::identity(k),
            trainable: true,
        }
    }

    pub fn new(domain: usize, weights: Tensor) -> Result<Self> {
        if weights.rank() != 2 || weights.rows() != weights.cols() {
            return Err(Error::invalid(format!(
                "projection must be square, got {:?}",
                weights.shape()
            )));
        }
        Ok(ProjectionMatrix {
            domain,
            weights,
            trainable: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    /// `PROJ <domain> <K>` followed by K rows of K numbers.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.dim();
        writeln!(w, "PROJ {} {}", self.domain, k)?;
        for r in 0..k {
            let row: Vec<String> = self.weights.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
        let (_, header) = lines.next().ok_or_else(|| Error::empty("read_projection", "input"))?;
        let header = header.map_err(|e| parse_err(1, e.to_string()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "PROJ" {
            return Err(parse_err(1, format!("expected 'PROJ <domain> <K>', got {header:?}")));
        }
        let domain = h[1].parse().map_err(|_| parse_err(1, format!("bad domain {:?}", h[1])))?;
        let k: usize = h[2].parse().map_err(|_| parse_err(1, format!("bad dimension {:?}", h[2])))?;
        let mut data = Vec::with_capacity(k * k);
        for r in 0..k {
            let (i, line) = lines
                .next()
                .ok_or_else(|| parse_err(r + 2, "missing projection row".into()))?;
            let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(i + 1, "non-numeric value".into()))?;
            if row.len() != k {
                return Err(parse_err(i + 1, format!("expected {k} values, found {}", row.len())));
            }
            data.extend(row);
        }
        ProjectionMatrix::new(domain, Tensor::matrix(k, k, data)?)
    }
}
