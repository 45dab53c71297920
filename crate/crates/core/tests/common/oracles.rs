//! Brute-force reference implementations, written from the definitions and
//! sharing no code with the library.

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

pub fn hausdorff_directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            best = best.min(dist(x, y));
        }
        worst = worst.max(best);
    }
    worst
}

pub fn hausdorff_undirected(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    hausdorff_directed(a, b).max(hausdorff_directed(b, a))
}

/// Groups must already be in ascending id order.
pub fn sep(groups: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (f1, f2) = (&groups[i], &groups[j]);
            let mut s = 0.0;
            for w2 in f2 {
                let mut best = f64::INFINITY;
                for w1 in f1 {
                    best = best.min(dist(w1, w2));
                }
                s += best;
            }
            total += s / f1.len() as f64;
        }
    }
    total
}

/// Pooled tf-idf vector `(1/|x|) sum_i tf(w_i) idf(w_i) v(w_i)` of
/// `doc`, with idf fitted on `corpus`.
pub fn tfidf_pooled(doc: &[&str], corpus: &[Vec<&str>], vectors: &dyn Fn(&str) -> Vec<f64>) -> Vec<f64> {
    let n = doc.len() as f64;
    let dim = vectors(doc[0]).len();
    let mut out = vec![0.0; dim];
    for &w in doc {
        let mut tf = 0.0;
        for &u in doc {
            if u == w {
                tf += 1.0;
            }
        }
        let mut df = 0.0;
        for d in corpus {
            if d.contains(&w) {
                df += 1.0;
            }
        }
        let idf = ((1.0 + corpus.len() as f64) / (1.0 + df)).ln() + 1.0;
        let v = vectors(w);
        for k in 0..dim {
            out[k] += tf * idf * v[k] / n;
        }
    }
    out
}

/// Mean over present domains `d` of
/// `mean(score[., d] | label d) - mean(score[., d] | label != d)`.
pub fn one_vs_rest(scores: &[Vec<f64>], labels: &[usize], n_domains: usize) -> f64 {
    let mut total = 0.0;
    let mut used = 0;
    for d in 0..n_domains {
        let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
        for (row, &l) in scores.iter().zip(labels) {
            if l == d {
                inside += row[d];
                n_in += 1;
            } else {
                outside += row[d];
                n_out += 1;
            }
        }
        if n_in > 0 && n_out > 0 {
            total += inside / n_in as f64 - outside / n_out as f64;
            used += 1;
        }
    }
    total / used as f64
}

/// Mean categorical cross-entropy through an explicit softmax.
pub fn cross_entropy(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &l) in scores.iter().zip(labels) {
        let z: f64 = row.iter().map(|s| s.exp()).sum();
        total -= (row[l].exp() / z).ln();
    }
    total / labels.len() as f64
}

/// `alpha_it * alpha_i / max_jw (alpha_jw * alpha_j)`.
pub fn normalized_attention(sentence: &[f64], words: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut max: f64 = 0.0;
    for (i, row) in words.iter().enumerate() {
        for &a in row {
            max = max.max(a * sentence[i]);
        }
    }
    words
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|&a| a * sentence[i] / max).collect())
        .collect()
}
