use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    /// Contiguous ranges partitioning `0..tokens.len()`.
    pub sentences: Vec<Range<usize>>,
    pub label: Option<usize>,
    pub domain: usize,
    pub text: String,
}

impl Document {
    /// A document whose tokens form a single sentence.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: Option<usize>, domain: usize) -> Self {
        let n = tokens.len();
        Document {
            id: id.into(),
            text: tokens.join(" "),
            sentences: if n == 0 { vec![] } else { vec![0..n] },
            tokens,
            label,
            domain,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let mut next = 0;
        for s in &self.sentences {
            if s.start != next || s.end <= s.start {
                return Err(Error::invalid(format!(
                    "document {}: sentence ranges do not partition its tokens",
                    self.id
                )));
            }
            next = s.end;
        }
        if next != self.tokens.len() {
            return Err(Error::invalid(format!(
                "document {}: sentence ranges cover {next} of {} tokens",
                self.id,
                self.tokens.len()
            )));
        }
        Ok(())
    }

    /// The same document with its class label removed.
    pub fn unlabeled(&self) -> Document {
        Document {
            label: None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub class_names: Vec<String>,
    pub domain_names: Vec<String>,
}

impl Corpus {
    pub fn new(class_names: Vec<String>, domain_names: Vec<String>) -> Self {
        Corpus {
            documents: Vec::new(),
            class_names,
            domain_names,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domain_names.iter().position(|d| d == name)
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.documents {
            d.check()?;
            if d.domain >= self.domain_names.len() {
                return Err(Error::invalid(format!("document {}: unknown domain {}", d.id, d.domain)));
            }
            if d.label.is_some_and(|y| y >= self.class_names.len()) {
                return Err(Error::invalid(format!("document {}: label out of range", d.id)));
            }
        }
        Ok(())
    }

    /// Merges `other` into `self`, remapping its domains by name.
    pub fn extend(&mut self, other: Corpus) -> Result<()> {
        if !self.class_names.is_empty() && !other.class_names.is_empty() && self.class_names != other.class_names {
            return Err(Error::invalid(format!(
                "cannot merge corpora with classes {:?} and {:?}",
                self.class_names, other.class_names
            )));
        }
        if self.class_names.is_empty() {
            self.class_names = other.class_names.clone();
        }
        let remap: Vec<usize> = other
            .domain_names
            .iter()
            .map(|n| match self.domain_index(n) {
                Some(i) => i,
                None => {
                    self.domain_names.push(n.clone());
                    self.domain_names.len() - 1
                }
            })
            .collect();
        for mut d in other.documents {
            d.domain = remap[d.domain];
            self.documents.push(d);
        }
        Ok(())
    }
}
