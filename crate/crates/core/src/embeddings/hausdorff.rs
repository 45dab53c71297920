use std::collections::HashMap;

use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check<P: AsRef<[f64]>>(op: &'static str, a: &[P], b: &[P]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::empty(op, "point set"));
    }
    let k = a[0].as_ref().len();
    if a.iter().chain(b).any(|p| p.as_ref().len() != k) {
        return Err(Error::invalid(format!("{op}: points differ in dimensionality")));
    }
    Ok(())
}

/// `sup_{a in A} inf_{b in B} |a - b|`.
pub fn hausdorff_directed<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<f64> {
    check("hausdorff_directed", a, b)?;
    let mut worst: f64 = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            best = best.min(dist(p.as_ref(), q.as_ref()));
            if best <= worst {
                // p cannot raise the supremum any more.
                break;
            }
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Maximum of both directed distances.
pub fn hausdorff_undirected<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<f64> {
    Ok(hausdorff_directed(a, b)?.max(hausdorff_directed(b, a)?))
}

/// The `k` most frequent tokens of `counts`, ties broken by token text.
pub fn top_k_by_frequency(counts: &HashMap<String, usize>, k: usize) -> Vec<String> {
    let mut v: Vec<(&String, &usize)> = counts.iter().collect();
    v.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(t, _)| t.clone()).collect()
}
