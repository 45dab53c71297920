use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{pca_2d, sep_metric, FeatureGroup};
use crate::autodiff::Tape;
use crate::data::{Document, PreparedData};
use crate::embeddings::{hausdorff_undirected, top_k_by_frequency};
use crate::error::{Error, Result};
use crate::extractors::EncodedDoc;
use crate::rng;
use crate::trainer::DannModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Documents sampled per domain.
    pub max_per_group: usize,
    /// Most frequent tokens per domain used for the Hausdorff distances.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            max_per_group: 1000,
            top_k: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub x: f64,
    pub y: f64,
    pub domain: String,
    pub class: Option<String>,
}

/// Undirected Hausdorff distance between a source domain's and the target's
/// frequent-word vectors, on the raw vectors and after each domain's projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffReport {
    pub source_domain: String,
    pub target_domain: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub extractor: String,
    pub lambda: f64,
    pub n_points: usize,
    pub domain_sep: f64,
    pub class_sep: Option<f64>,
    /// Eigenvalues of the two plotted principal directions.
    pub explained_variance: [f64; 2],
    pub points: Vec<ReportPoint>,
    pub hausdorff: Vec<HausdorffReport>,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn points_csv(&self) -> String {
        let mut s = String::from("x,y,domain,class\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.x, p.y, p.domain, p.class.as_deref().unwrap_or(""));
        }
        s
    }

    /// Writes `report.json` and `points.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()? + "\n").map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("points.csv");
        std::fs::write(&csv, self.points_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Extractor features of `docs` in evaluation mode, one row per document.
pub fn extract_features(model: &DannModel, docs: &[&EncodedDoc]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(docs.len());
    for chunk in docs.chunks(256) {
        let mut tape = Tape::eval();
        let mut unused = rng::stream(0, "eval");
        let f = model.features(&mut tape, chunk, &mut unused)?;
        let z = tape.value(f.z);
        out.extend((0..z.rows()).map(|i| z.row(i).to_vec()));
    }
    Ok(out)
}

fn hausdorff_reports(model: &DannModel, data: &PreparedData, top_k: usize) -> Result<Vec<HausdorffReport>> {
    if model.embedding.projections.is_empty() {
        return Ok(Vec::new());
    }
    let table = model.store.value(model.embedding.table);
    let frequent = |d: usize| -> Vec<usize> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in data.training_documents().filter(|x| x.domain == d) {
            for t in &doc.tokens {
                if model.embedding.vocab.contains(t) {
                    *counts.entry(t.clone()).or_default() += 1;
                }
            }
        }
        top_k_by_frequency(&counts, top_k)
            .iter()
            .filter_map(|t| model.embedding.vocab.get(t))
            .collect()
    };
    let vectors = |rows: &[usize], d: Option<usize>| -> Vec<Vec<f64>> {
        let w = d.and_then(|d| model.embedding.projection(d)).map(|id| model.store.value(id));
        rows.iter()
            .map(|&r| {
                let v = table.row(r);
                match w {
                    Some(w) => (0..w.rows()).map(|i| w.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect(),
                    None => v.to_vec(),
                }
            })
            .collect()
    };
    let t = model.spec.target_domain;
    let tgt_rows = frequent(t);
    let mut out = Vec::new();
    for s in (0..model.spec.n_domains()).filter(|&d| d != t) {
        let src_rows = frequent(s);
        if src_rows.is_empty() || tgt_rows.is_empty() {
            continue;
        }
        out.push(HausdorffReport {
            source_domain: model.spec.domain_names[s].clone(),
            target_domain: model.spec.domain_names[t].clone(),
            before: hausdorff_undirected(&vectors(&src_rows, None), &vectors(&tgt_rows, None))?,
            after: hausdorff_undirected(&vectors(&src_rows, Some(s)), &vectors(&tgt_rows, Some(t)))?,
        });
    }
    Ok(out)
}

/// Separation by domain and by class, a 2-D projection of the features of
/// the held-out documents, and (with projections) embedding Hausdorff
/// distances.
pub fn feature_report(model: &DannModel, data: &PreparedData, opts: &ReportOptions) -> Result<DiagnosticsReport> {
    let mut by_domain: BTreeMap<usize, Vec<&Document>> = BTreeMap::new();
    for d in data.source_test.iter().chain(&data.target_test) {
        by_domain.entry(d.domain).or_default().push(d);
    }
    if by_domain.is_empty() {
        return Err(Error::empty("feature_report", "test documents"));
    }
    let mut sampler = rng::stream(opts.seed, "report.sample");
    let mut docs: Vec<&Document> = Vec::new();
    for group in by_domain.values() {
        if group.len() <= opts.max_per_group {
            docs.extend(group);
        } else {
            let mut idx = sample(&mut sampler, group.len(), opts.max_per_group).into_vec();
            idx.sort_unstable();
            docs.extend(idx.into_iter().map(|i| group[i]));
        }
    }
    let encoded = docs.iter().map(|d| model.encode(d)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EncodedDoc> = encoded.iter().collect();
    let z = extract_features(model, &refs)?;

    let group = |key: &dyn Fn(&Document) -> Option<usize>| -> Vec<FeatureGroup> {
        let mut m: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for (d, p) in docs.iter().zip(&z) {
            if let Some(k) = key(d) {
                m.entry(k).or_default().push(p.clone());
            }
        }
        m.into_iter().map(|(id, points)| FeatureGroup { id, points }).collect()
    };
    let domains = group(&|d| Some(d.domain));
    let classes = group(&|d| d.label);
    let domain_sep = if domains.len() >= 2 { sep_metric(&domains)? } else { 0.0 };
    let class_sep = if classes.len() >= 2 { Some(sep_metric(&classes)?) } else { None };

    let (coords, explained) = if z.len() >= 3 && z[0].len() >= 2 {
        let p = pca_2d(&z)?;
        (p.coords, [p.eigenvalues[0], p.eigenvalues[1]])
    } else {
        (vec![[0.0, 0.0]; z.len()], [0.0, 0.0])
    };
    let points = docs
        .iter()
        .zip(coords)
        .map(|(d, [x, y])| ReportPoint {
            x,
            y,
            domain: model.spec.domain_names[d.domain].clone(),
            class: d.label.map(|c| model.spec.class_names[c].clone()),
        })
        .collect();
    Ok(DiagnosticsReport {
        extractor: model.extractor.kind().to_string(),
        lambda: model.config.lambda,
        n_points: z.len(),
        domain_sep,
        class_sep,
        explained_variance: explained,
        points,
        hausdorff: hausdorff_reports(model, data, opts.top_k)?,
    })
}
