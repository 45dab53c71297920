use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{Corpus, Document};
use super::rating::{map_rating, RatingScheme};
use super::tokenize::tokenize;
use crate::error::{Error, Result};

/// Field names of a JSON Lines corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JsonlSchema {
    pub text_field: String,
    pub label_field: String,
    /// When absent (or missing on a line), documents get `default_domain`.
    pub domain_field: Option<String>,
    pub default_domain: String,
    pub id_field: Option<String>,
    pub scheme: RatingScheme,
    /// Fail on the first malformed line instead of counting it.
    pub strict: bool,
}

impl Default for JsonlSchema {
    fn default() -> Self {
        JsonlSchema {
            text_field: "text".into(),
            label_field: "overall".into(),
            domain_field: Some("category".into()),
            default_domain: "default".into(),
            id_field: None,
            scheme: RatingScheme::AmazonBinary,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines: usize,
    pub loaded: usize,
    /// Dropped by the rating scheme or empty after tokenization.
    pub excluded: usize,
    pub malformed: usize,
    /// First few malformed-line messages.
    pub errors: Vec<String>,
}

fn parse_line(line: &str, schema: &JsonlSchema) -> std::result::Result<Value, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !v.is_object() {
        return Err("not a JSON object".into());
    }
    if v.get(&schema.text_field).and_then(Value::as_str).is_none() {
        return Err(format!("missing string field {:?}", schema.text_field));
    }
    Ok(v)
}

fn label_value(v: &Value, field: &str) -> std::result::Result<i64, String> {
    let raw = v.get(field).ok_or_else(|| format!("missing field {field:?}"))?;
    let x = match raw {
        Value::Number(n) => n.as_f64().ok_or("bad number")?,
        Value::String(s) => s.trim().parse::<f64>().map_err(|_| format!("non-numeric {field:?}: {s:?}"))?,
        _ => return Err(format!("field {field:?} is not a number")),
    };
    if x.fract() != 0.0 {
        return Err(format!("field {field:?} is not an integer: {x}"));
    }
    Ok(x as i64)
}

pub fn load_jsonl_reader<R: BufRead>(reader: R, schema: &JsonlSchema) -> Result<(Corpus, LoadReport)> {
    let mut corpus = Corpus::new(schema.scheme.class_names(), Vec::new());
    let mut report = LoadReport::default();
    let mut max_label = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let parsed = parse_line(&line, schema).and_then(|v| {
            let rating = label_value(&v, &schema.label_field)?;
            let class = map_rating(rating, schema.scheme).map_err(|e| e.to_string())?;
            Ok((v, class))
        });
        let (v, class) = match parsed {
            Ok(x) => x,
            Err(msg) => {
                if schema.strict {
                    return Err(Error::Parse { line: lineno, msg });
                }
                report.malformed += 1;
                if report.errors.len() < 10 {
                    report.errors.push(format!("line {lineno}: {msg}"));
                }
                continue;
            }
        };
        let text = v[&schema.text_field].as_str().unwrap_or_default().to_string();
        let tok = tokenize(&text);
        let Some(class) = class else {
            report.excluded += 1;
            continue;
        };
        if tok.is_empty() {
            report.excluded += 1;
            continue;
        }
        let domain_name = schema
            .domain_field
            .as_ref()
            .and_then(|f| v.get(f))
            .and_then(Value::as_str)
            .unwrap_or(&schema.default_domain)
            .to_string();
        let domain = match corpus.domain_index(&domain_name) {
            Some(d) => d,
            None => {
                corpus.domain_names.push(domain_name.clone());
                corpus.domain_names.len() - 1
            }
        };
        let id = schema
            .id_field
            .as_ref()
            .and_then(|f| v.get(f))
            .map(|x| match x {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| format!("{domain_name}:{lineno}"));
        max_label = max_label.max(class);
        corpus.documents.push(Document {
            id,
            tokens: tok.tokens,
            sentences: tok.sentences,
            label: Some(class),
            domain,
            text,
        });
        report.loaded += 1;
    }
    if schema.scheme == RatingScheme::Direct && !corpus.documents.is_empty() {
        corpus.class_names = (0..=max_label).map(|c| c.to_string()).collect();
    }
    Ok((corpus, report))
}

/// Reads a JSON Lines corpus. Malformed lines are counted in the report
/// (or fail the load in strict mode).
pub fn load_jsonl(path: impl AsRef<Path>, schema: &JsonlSchema) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    load_jsonl_reader(BufReader::new(f), schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amazon_line() {
        let src = r#"{"text":"good product","overall":5,"category":"Baby"}"#;
        let (c, r) = load_jsonl_reader(src.as_bytes(), &JsonlSchema::default()).unwrap();
        assert_eq!(r.loaded, 1);
        let d = &c.documents[0];
        assert_eq!(c.class_names[d.label.unwrap()], "positive");
        assert_eq!(c.domain_names[d.domain], "Baby");
        assert_eq!(d.tokens, vec!["good", "product"]);
    }

    #[test]
    fn malformed_and_excluded_counts() {
        let src = concat!(
            "{\"overall\":5,\"category\":\"Baby\"}\n",
            "not json\n",
            "{\"text\":\"meh\",\"overall\":3,\"category\":\"Baby\"}\n",
            "{\"text\":\"bad\",\"overall\":1.0,\"category\":\"Auto\"}\n",
        );
        let (c, r) = load_jsonl_reader(src.as_bytes(), &JsonlSchema::default()).unwrap();
        assert_eq!((r.lines, r.loaded, r.excluded, r.malformed), (4, 1, 1, 2));
        assert_eq!(c.domain_names, vec!["Auto"]);
        let strict = JsonlSchema {
            strict: true,
            ..JsonlSchema::default()
        };
        let err = load_jsonl_reader(src.as_bytes(), &strict).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let (c, r) = load_jsonl_reader("".as_bytes(), &JsonlSchema::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(r.lines, 0);
    }
}
