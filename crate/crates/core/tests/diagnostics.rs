mod common;

use common::{assert_close, equivalence, oracles, random_points, rng};
use dann::diagnostics::{normalize_attention, pca_2d, sep_metric, FeatureGroup};
use dann::embeddings::{hausdorff_directed, hausdorff_undirected};
use proptest::prelude::*;

#[test]
fn library_matches_brute_force_oracles() {
    for (name, diff) in equivalence::all_cases(11) {
        assert!(diff <= 1e-9, "{name}: max difference {diff:e}");
    }
}

fn group(id: usize, points: &[&[f64]]) -> FeatureGroup {
    FeatureGroup {
        id,
        points: points.iter().map(|p| p.to_vec()).collect(),
    }
}

#[test]
fn sep_examples() {
    assert_eq!(sep_metric(&[group(0, &[&[1.0, 2.0]]), group(1, &[&[1.0, 2.0]])]).unwrap(), 0.0);
    assert_close(sep_metric(&[group(0, &[&[0.0, 0.0]]), group(1, &[&[3.0, 4.0]])]).unwrap(), 5.0, 1e-12);
    let three = [group(0, &[&[0.0, 0.0]]), group(1, &[&[1.0, 0.0]]), group(2, &[&[0.0, 1.0]])];
    assert_close(sep_metric(&three).unwrap(), 2.0 + 2f64.sqrt(), 1e-12);
    assert!(sep_metric(&three[..1]).is_err());
    assert!(sep_metric(&[group(0, &[]), group(1, &[&[1.0]])]).is_err());
}

#[test]
fn sep_pairs_follow_group_id_order() {
    // (1/|F1|) makes the metric asymmetric; the lower id plays F1.
    let a = group(0, &[&[0.0], &[10.0]]);
    let b = group(1, &[&[1.0]]);
    let forward = sep_metric(&[a.clone(), b.clone()]).unwrap();
    assert_close(forward, 0.5, 1e-12);
    assert_eq!(sep_metric(&[b, a]).unwrap(), forward);
}

#[test]
fn hausdorff_examples() {
    let a = vec![vec![0.0], vec![10.0]];
    let b = vec![vec![0.0]];
    assert_eq!(hausdorff_directed(&a, &b).unwrap(), 10.0);
    assert_eq!(hausdorff_directed(&b, &a).unwrap(), 0.0);
    assert_eq!(hausdorff_undirected(&b, &a).unwrap(), 10.0);
    assert!(hausdorff_directed::<Vec<f64>>(&[], &b).is_err());
}

#[test]
fn normalized_attention_example() {
    let map = normalize_attention(&[0.75, 0.25], &[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
    let want = [[1.0, 2.0 / 3.0], [0.125 / 0.45, 0.125 / 0.45]];
    for (row, w) in map.normalized.iter().zip(want) {
        for (a, b) in row.iter().zip(w) {
            assert_close(*a, b, 1e-12);
        }
    }
    assert_eq!(normalize_attention(&[1.0], &[vec![1.0]]).unwrap().normalized, vec![vec![1.0]]);
    let uniform = normalize_attention(&[0.5, 0.5], &[vec![0.25; 4], vec![0.25; 4]]).unwrap();
    assert!(uniform.normalized.iter().flatten().all(|&v| v == 1.0));
}

#[test]
fn pca_reconstruction_error_is_the_dropped_spectrum() {
    let mut r = rng(5);
    for _ in 0..20 {
        let pts = random_points(&mut r, 5, 4);
        let p = pca_2d(&pts).unwrap();
        let n = pts.len() as f64;
        let mut err = 0.0;
        for (x, c) in pts.iter().zip(&p.coords) {
            for j in 0..4 {
                let rec = p.mean[j] + c[0] * p.components[0][j] + c[1] * p.components[1][j];
                err += (x[j] - rec).powi(2) / n;
            }
        }
        let dropped: f64 = p.eigenvalues[2..].iter().sum();
        assert_close(err, dropped, 1e-9);
    }
}

#[test]
fn pca_handles_collinear_points() {
    let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let p = pca_2d(&pts).unwrap();
    assert!(p.rank_deficient);
    assert!(p.coords.iter().all(|c| c[1] == 0.0));
    assert!(p.components[0][0] > 0.0);
}

fn points(max: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, dim), 1..max)
}

proptest! {
    #[test]
    fn hausdorff_is_a_symmetric_premetric(a in points(8, 3), b in points(8, 3)) {
        let ab = hausdorff_undirected(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff_undirected(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(hausdorff_undirected(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - oracles::hausdorff_undirected(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn sep_is_invariant_under_rigid_motion(
        a in points(6, 2),
        b in points(6, 2),
        angle in 0.0..std::f64::consts::TAU,
        shift in prop::array::uniform2(-10.0..10.0f64),
    ) {
        let (s, c) = angle.sin_cos();
        let mv = |g: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            g.iter().map(|p| vec![c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]]).collect()
        };
        let before = sep_metric(&[FeatureGroup { id: 0, points: a.clone() }, FeatureGroup { id: 1, points: b.clone() }]).unwrap();
        let after = sep_metric(&[FeatureGroup { id: 0, points: mv(&a) }, FeatureGroup { id: 1, points: mv(&b) }]).unwrap();
        prop_assert!(before >= 0.0);
        prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before));
        let same = sep_metric(&[FeatureGroup { id: 0, points: a.clone() }, FeatureGroup { id: 1, points: a }]).unwrap();
        prop_assert_eq!(same, 0.0);
    }

    #[test]
    fn normalized_attention_lies_in_unit_interval(
        sentence in prop::collection::vec(0.01..1.0f64, 1..4),
        width in 1usize..5,
        raw in prop::collection::vec(0.01..1.0f64, 16),
    ) {
        let words: Vec<Vec<f64>> = (0..sentence.len()).map(|i| raw[i * 4..i * 4 + width.min(4)].to_vec()).collect();
        let map = normalize_attention(&sentence, &words).unwrap();
        let all: Vec<f64> = map.normalized.iter().flatten().copied().collect();
        prop_assert!(all.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(all.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }
}
