//! Trains the hierarchical attention extractor briefly and prints the
//! normalized word attention of a few target test documents.
//!
//! ```text
//! cargo run --release --example han_attention -- [seed] [docs]
//! ```

use dann::bench::{arm_data, desk_config, Arm};
use dann::data::{synth_generate, SynthSpec};
use dann::diagnostics::normalized_attention;
use dann::extractors::ExtractorKind;
use dann::trainer::{train, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let n_docs: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2);

    let spec = SynthSpec {
        source_docs: 600,
        target_docs: 600,
        ..SynthSpec::default()
    };
    let synth = synth_generate(&spec, seed)?;
    let data = arm_data(&synth, seed, Arm::LowResource)?;
    let (model, history) = train(&desk_config(ExtractorKind::Han, seed), &data, &synth.table, &TrainOptions::default())?;
    if let Some(r) = history.last() {
        println!("target accuracy {:.3}", r.tgt_acc.unwrap_or(f64::NAN));
    }

    for doc in data.target_test.iter().take(n_docs) {
        let map = normalized_attention(&model, doc)?;
        let class = doc.label.map_or("?", |l| synth.corpus.class_names[l].as_str());
        println!("\n{} ({class})", doc.id);
        for ((tokens, weights), a) in map.tokens.iter().zip(&map.normalized).zip(&map.sentence) {
            let words: Vec<String> = tokens.iter().zip(weights).map(|(t, w)| format!("{t}:{w:.2}")).collect();
            println!("  [{a:.2}] {}", words.join(" "));
        }
    }
    Ok(())
}
