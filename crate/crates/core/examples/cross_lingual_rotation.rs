//! Learning a target-domain projection for a rotated embedding space,
//! compared with training on the correctly aligned vectors.
//!
//! ```text
//! cargo run --release --example cross_lingual_rotation -- [extractor] [seed] [epochs]
//! ```

use dann::bench::{arm_data, desk_config, final_target_accuracy, run_arm, Arm};
use dann::data::{synth_generate, ShiftMode, SynthSpec};
use dann::diagnostics::{feature_report, ReportOptions};
use dann::extractors::ExtractorKind;
use dann::trainer::DEFAULT_LAMBDA_CROSS_LINGUAL;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: ExtractorKind = args.first().map(String::as_str).unwrap_or("avg").parse()?;
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let epochs: Option<usize> = args.get(2).map(|s| s.parse()).transpose()?;

    let spec = SynthSpec {
        shift: ShiftMode::Rotation,
        ..SynthSpec::default()
    };
    let synth = synth_generate(&spec, seed)?;
    let mut cfg = desk_config(kind, seed);
    cfg.cross_lingual = true;
    cfg.lambda = DEFAULT_LAMBDA_CROSS_LINGUAL;
    if let Some(epochs) = epochs {
        cfg.epochs = epochs;
    }

    let (model, history) = run_arm(&synth, &synth.table, &cfg, Arm::LowResource)?;
    let data = arm_data(&synth, seed, Arm::LowResource)?;
    let report = feature_report(&model, &data, &ReportOptions { seed, ..ReportOptions::default() })?;
    println!("learned projection: target acc {:.3}", final_target_accuracy(&history));
    for h in &report.hausdorff {
        println!(
            "  hausdorff {} -> {}: {:.3} at identity, {:.3} after training",
            h.target_domain, h.source_domain, h.before, h.after
        );
    }
    if let (Some(rotation), Some(w)) = (&synth.rotation, model.embedding.projection(synth.target_domain)) {
        // W_t R = I would undo the rotation exactly.
        let wr = model.store.value(w).matmul(rotation)?;
        let dim = rotation.rows();
        let off = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| (wr.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        println!("  max |W_t R - I| = {off:.3}");
    }

    let (_, aligned) = run_arm(&synth, &synth.aligned_table, &cfg, Arm::LowResource)?;
    println!("aligned vectors:    target acc {:.3}", final_target_accuracy(&aligned));
    Ok(())
}
