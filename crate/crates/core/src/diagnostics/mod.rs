//! Feature-space analysis: group separation, 2-D projection, normalized
//! hierarchical attention and assembled reports.

mod report;

pub use report::{extract_features, feature_report, DiagnosticsReport, HausdorffReport, ReportOptions, ReportPoint};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::Document;
use crate::error::{Error, Result};
use crate::extractors::ExtractorKind;
use crate::trainer::DannModel;

/// Feature vectors sharing a class or domain id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub id: usize,
    pub points: Vec<Vec<f64>>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Separation of feature groups: for every unordered pair `(F1, F2)` with
/// `F1` the lower id, `(1/|F1|) * sum_{w2 in F2} min_{w1 in F1} |w1 - w2|`,
/// summed over pairs.
pub fn sep_metric(groups: &[FeatureGroup]) -> Result<f64> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!("sep_metric needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.points.is_empty()) {
        return Err(Error::empty("sep_metric", format!("group {}", g.id)));
    }
    let k = groups[0].points[0].len();
    if groups.iter().flat_map(|g| &g.points).any(|p| p.len() != k) {
        return Err(Error::invalid("sep_metric: points differ in dimensionality"));
    }
    let mut order: Vec<&FeatureGroup> = groups.iter().collect();
    order.sort_by_key(|g| g.id);
    let mut total = 0.0;
    for (i, f1) in order.iter().enumerate() {
        for f2 in &order[i + 1..] {
            let s: f64 = f2
                .points
                .iter()
                .map(|w2| f1.points.iter().map(|w1| dist(w1, w2)).fold(f64::INFINITY, f64::min))
                .sum();
            total += s / f1.points.len() as f64;
        }
    }
    Ok(total)
}

/// Result of [`pca_2d`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    pub mean: Vec<f64>,
    /// Unit principal directions; the second is zero when the data has rank < 2.
    pub components: [Vec<f64>; 2],
    /// Eigenvalues of the covariance matrix (divided by n), descending.
    pub eigenvalues: Vec<f64>,
    pub rank_deficient: bool,
}

/// Projects mean-centered points onto their top two principal directions.
/// Each direction's first nonzero component is made positive.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca2d> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("pca_2d needs at least 3 points, got {}", points.len())));
    }
    let k = points[0].len();
    if k < 2 {
        return Err(Error::invalid("pca_2d needs at least 2 dimensions"));
    }
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("pca_2d: points differ in dimensionality"));
    }
    let n = points.len();
    let mut mean = vec![0.0; k];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v / n as f64);
    }
    let x = DMatrix::from_fn(n, k, |i, j| points[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let tol = 1e-12 * eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    let rank = eigenvalues.iter().filter(|&&v| v > tol).count();
    let direction = |idx: usize| -> Vec<f64> {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[idx]).iter().copied().collect();
        if let Some(&first) = v.iter().find(|c| c.abs() > 1e-12) {
            if first < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
        }
        v
    };
    let c0 = if rank >= 1 { direction(0) } else { vec![0.0; k] };
    let c1 = if rank >= 2 { direction(1) } else { vec![0.0; k] };
    if rank < 2 {
        log::warn!("pca_2d: data has rank {rank}; second coordinate set to zero");
    }
    let coords = (0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&c0), p(&c1)]
        })
        .collect();
    Ok(Pca2d {
        coords,
        mean,
        components: [c0, c1],
        eigenvalues,
        rank_deficient: rank < 2,
    })
}

/// Attention weights of one document from the hierarchical extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    /// `alpha_i` per sentence.
    pub sentence: Vec<f64>,
    /// `alpha_it` per word, one row per sentence.
    pub words: Vec<Vec<f64>>,
    /// `alpha_it * alpha_i` divided by its maximum over the document.
    pub normalized: Vec<Vec<f64>>,
    /// Tokens per sentence, when the map came from a document.
    pub tokens: Vec<Vec<String>>,
}

/// Combines sentence and word attention into values in `[0, 1]` whose
/// maximum over the document is exactly 1.
pub fn normalize_attention(sentence: &[f64], words: &[Vec<f64>]) -> Result<AttentionMap> {
    if sentence.is_empty() || sentence.len() != words.len() {
        return Err(Error::invalid(format!(
            "need one word-attention row per sentence ({} sentences, {} rows)",
            sentence.len(),
            words.len()
        )));
    }
    if words.iter().any(Vec::is_empty) {
        return Err(Error::empty("normalize_attention", "sentence"));
    }
    let products: Vec<Vec<f64>> = sentence
        .iter()
        .zip(words)
        .map(|(a, row)| row.iter().map(|w| w * a).collect())
        .collect();
    let max = products.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::invalid("attention products are not positive"));
    }
    let normalized = products
        .iter()
        .map(|row| row.iter().map(|p| if *p == max { 1.0 } else { p / max }).collect())
        .collect();
    Ok(AttentionMap {
        sentence: sentence.to_vec(),
        words: words.to_vec(),
        normalized,
        tokens: Vec::new(),
    })
}

pub const ATTENTION_UNAVAILABLE: &str = "attention unavailable for this extractor";

/// Runs the hierarchical extractor on `doc` and returns its normalized attention.
pub fn normalized_attention(model: &DannModel, doc: &Document) -> Result<AttentionMap> {
    if model.extractor.kind() != ExtractorKind::Han {
        return Err(Error::invalid(format!("{ATTENTION_UNAVAILABLE} ({})", model.extractor.kind())));
    }
    let enc = model.encode(doc)?;
    let mut tape = Tape::eval();
    let mut unused = crate::rng::stream(0, "eval");
    let out = model.features(&mut tape, &[&enc], &mut unused)?;
    let att = out.attention.expect("han returns attention");
    let word_alpha = tape.value(att.word_alpha).data();
    let sentence = tape.value(att.sent_alpha).data().to_vec();
    let words: Vec<Vec<f64>> = att.sentence_rows.iter().map(|r| word_alpha[r.clone()].to_vec()).collect();
    let mut map = normalize_attention(&sentence, &words)?;
    map.tokens = enc
        .sentences
        .iter()
        .map(|r| doc.tokens[r.clone()].to_vec())
        .collect();
    Ok(map)
}
