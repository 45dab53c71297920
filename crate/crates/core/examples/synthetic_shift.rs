//! Source-only versus adversarial training on the synthetic lexical-swap
//! benchmark, for one extractor over a few seeds.
//!
//! ```text
//! cargo run --release --example synthetic_shift -- [extractor] [seeds] [epochs]
//! ```

use std::time::Instant;

use dann::bench::{desk_config, final_target_accuracy, run_arm, Arm};
use dann::data::{synth_generate, SynthSpec};
use dann::extractors::ExtractorKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ExtractorKind = args.first().map(String::as_str).unwrap_or("avg").parse()?;
    let seeds: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let epochs: Option<usize> = args.get(2).map(|s| s.parse()).transpose()?;

    let mut means = [0.0; 3];
    for seed in 0..seeds {
        let synth = synth_generate(&SynthSpec::default(), seed)?;
        let mut cfg = desk_config(kind, seed);
        if let Some(epochs) = epochs {
            cfg.epochs = epochs;
        }
        for (i, arm) in Arm::ALL.into_iter().enumerate() {
            let start = Instant::now();
            let (_, history) = run_arm(&synth, &synth.table, &cfg, arm)?;
            let acc = final_target_accuracy(&history);
            means[i] += acc / seeds as f64;
            println!("seed {seed} {kind} {arm:<12} target acc {acc:.3} ({:.1}s)", start.elapsed().as_secs_f64());
        }
    }
    println!("mean over {seeds} seed(s):");
    for (arm, mean) in Arm::ALL.iter().zip(means) {
        println!("  {arm:<12} {:.1}", 100.0 * mean);
    }
    Ok(())
}
