//! Hausdorff distance between the frequent-word vectors of two domains whose
//! embedding spaces differ by a rotation, before and after undoing it.
//!
//! ```text
//! cargo run --release --example hausdorff_rotation -- [seed] [top_k]
//! ```

use std::collections::HashMap;

use dann::data::{synth_generate, ShiftMode, SynthData, SynthSpec};
use dann::embeddings::{hausdorff_undirected, top_k_by_frequency};

fn frequent_vectors(synth: &SynthData, domain: usize, k: usize) -> Vec<Vec<f64>> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in synth.corpus.documents.iter().filter(|d| d.domain == domain) {
        for t in &d.tokens {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    top_k_by_frequency(&counts, k)
        .iter()
        .filter_map(|t| synth.table.vector(t).map(<[f64]>::to_vec))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let k: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(500);

    let spec = SynthSpec {
        shift: ShiftMode::Rotation,
        ..SynthSpec::default()
    };
    let synth = synth_generate(&spec, seed)?;
    let source = frequent_vectors(&synth, 0, k);
    let target = frequent_vectors(&synth, synth.target_domain, k);
    println!("{} source and {} target vectors", source.len(), target.len());
    println!("hausdorff as given:      {:.4}", hausdorff_undirected(&source, &target)?);

    let r = synth.rotation.as_ref().expect("rotation mode");
    let undone: Vec<Vec<f64>> = target
        .iter()
        .map(|v| (0..r.cols()).map(|j| (0..r.rows()).map(|i| r.get(i, j) * v[i]).sum()).collect())
        .collect();
    println!("hausdorff, R^T applied:  {:.4}", hausdorff_undirected(&source, &undone)?);
    Ok(())
}
