//! Versioned plain-text model files.
//!
//! ```text
//! DANN-CHECKPOINT 1
//! CONFIG {...}
//! SPEC {...}
//! VOCAB <n>
//! <token>            (n lines)
//! IDF <domain> <n_docs> <entries>
//! <token> <df>       (entries lines, sorted by token)
//! PARAM <name> <d0>x<d1>...
//! <row values>       (one line per row)
//! END
//! ```
//!
//! Values use the shortest representation that reads back to the same
//! `f64`, so a save/load cycle is exact and equal models give equal files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::DannConfig;
use super::model::{build_model, DannModel, DataSpec};
use crate::autodiff::Tensor;
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::extractors::IdfTable;

const MAGIC: &str = "DANN-CHECKPOINT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SpecHeader {
    class_names: Vec<String>,
    domain_names: Vec<String>,
    target_domain: usize,
    seq_len: usize,
}

fn write_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn checkpoint_to_string(model: &DannModel) -> Result<String> {
    let mut s = format!("{MAGIC} {VERSION}\n");
    let _ = writeln!(s, "CONFIG {}", serde_json::to_string(&model.config)?);
    let header = SpecHeader {
        class_names: model.spec.class_names.clone(),
        domain_names: model.spec.domain_names.clone(),
        target_domain: model.spec.target_domain,
        seq_len: model.spec.seq_len,
    };
    let _ = writeln!(s, "SPEC {}", serde_json::to_string(&header)?);
    let vocab = model.embedding.vocab.tokens();
    let _ = writeln!(s, "VOCAB {}", vocab.len());
    for t in vocab {
        let _ = writeln!(s, "{t}");
    }
    for (d, idf) in model.spec.idf.iter().enumerate() {
        if let Some(idf) = idf {
            let sorted: BTreeMap<&String, &usize> = idf.df.iter().collect();
            let _ = writeln!(s, "IDF {d} {} {}", idf.n_docs, sorted.len());
            for (t, df) in sorted {
                let _ = writeln!(s, "{t} {df}");
            }
        }
    }
    for (_, p) in model.store.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        let shape = if dims.is_empty() { "-".to_string() } else { dims.join("x") };
        let _ = writeln!(s, "PARAM {} {shape}", p.name);
        if p.value.rank() == 2 {
            for i in 0..p.value.rows() {
                write_values(&mut s, p.value.row(i));
            }
        } else {
            write_values(&mut s, p.value.data());
        }
    }
    s.push_str("END\n");
    Ok(s)
}

pub fn save_checkpoint(model: &DannModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, checkpoint_to_string(model)?).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(Error::Parse {
                line: self.line + 1,
                msg: "unexpected end of checkpoint".into(),
            }),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn number<T: std::str::FromStr>(&self, field: &str) -> Result<T> {
        field.parse().map_err(|_| self.err(format!("bad number {field:?}")))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let vals = l
            .split_ascii_whitespace()
            .map(|f| self.number::<f64>(f))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, got {}", vals.len())));
        }
        Ok(vals)
    }
}

pub fn checkpoint_from_str(text: &str) -> Result<DannModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next()?;
    match head.split_once(' ') {
        Some((MAGIC, v)) if lines.number::<u32>(v)? == VERSION => {}
        Some((MAGIC, v)) => return Err(lines.err(format!("unsupported checkpoint version {v}"))),
        _ => return Err(lines.err("not a checkpoint file")),
    }
    let cfg_line = lines.next()?;
    let cfg: DannConfig = serde_json::from_str(
        cfg_line
            .strip_prefix("CONFIG ")
            .ok_or_else(|| lines.err("expected CONFIG"))?,
    )?;
    let spec_line = lines.next()?;
    let header: SpecHeader = serde_json::from_str(
        spec_line
            .strip_prefix("SPEC ")
            .ok_or_else(|| lines.err("expected SPEC"))?,
    )?;
    let vocab_line = lines.next()?;
    let n_vocab: usize = lines.number(vocab_line.strip_prefix("VOCAB ").ok_or_else(|| lines.err("expected VOCAB"))?)?;
    let mut vocab = Vocabulary::new();
    for _ in 0..n_vocab {
        let t = lines.next()?;
        vocab.insert(t);
    }
    if vocab.len() != n_vocab {
        return Err(lines.err("duplicate vocabulary entries"));
    }
    let mut spec = DataSpec::new(
        header.class_names,
        header.domain_names,
        header.target_domain,
        header.seq_len,
    );
    let mut params: Vec<(String, Tensor)> = Vec::new();
    loop {
        let l = lines.next()?;
        let fields: Vec<&str> = l.split_ascii_whitespace().collect();
        match fields.as_slice() {
            ["END"] => break,
            ["IDF", d, n_docs, entries] => {
                let d: usize = lines.number(d)?;
                if d >= spec.idf.len() {
                    return Err(lines.err(format!("idf table for unknown domain {d}")));
                }
                let n_docs = lines.number(n_docs)?;
                let entries: usize = lines.number(entries)?;
                let mut df = HashMap::with_capacity(entries);
                for _ in 0..entries {
                    let l = lines.next()?;
                    let (t, c) = l.split_once(' ').ok_or_else(|| lines.err("expected token and count"))?;
                    df.insert(t.to_string(), lines.number(c)?);
                }
                spec.idf[d] = Some(IdfTable { n_docs, df });
            }
            ["PARAM", name, shape] => {
                let shape: Vec<usize> = if *shape == "-" {
                    Vec::new()
                } else {
                    shape.split('x').map(|f| lines.number(f)).collect::<Result<_>>()?
                };
                let data = if shape.len() == 2 {
                    let mut data = Vec::with_capacity(shape[0] * shape[1]);
                    for _ in 0..shape[0] {
                        data.extend(lines.values(shape[1])?);
                    }
                    data
                } else {
                    lines.values(shape.iter().product())?
                };
                params.push((name.to_string(), Tensor::new(shape, data)?));
            }
            _ => return Err(lines.err(format!("unexpected line {l:?}"))),
        }
    }
    let table_value = params
        .iter()
        .find(|(n, _)| n == "embed.table")
        .map(|(_, t)| t.clone())
        .ok_or_else(|| lines.err("missing embed.table"))?;
    let table = EmbeddingTable::new(vocab, table_value)?;
    let mut model = build_model(&cfg, &spec, &table)?;
    if params.len() != model.store.len() {
        return Err(lines.err(format!(
            "checkpoint holds {} parameters, model expects {}",
            params.len(),
            model.store.len()
        )));
    }
    for (name, value) in params {
        let id = model
            .store
            .by_name(&name)
            .ok_or_else(|| lines.err(format!("unknown parameter {name}")))?;
        model.store.set_value(id, value)?;
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<DannModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
