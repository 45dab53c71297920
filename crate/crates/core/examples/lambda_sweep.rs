//! Sweep the adversarial weight and watch domain separation and accuracy.
//!
//! ```text
//! cargo run --release --example lambda_sweep -- [seeds] [extractor] [zero-shot|low-resource]
//! ```

use dann::bench::{arm_data, desk_config, final_target_accuracy, run_arm, Arm};
use dann::data::{synth_generate, SynthSpec};
use dann::diagnostics::{feature_report, ReportOptions};
use dann::extractors::ExtractorKind;
use dann::trainer::CriticLoss;

const LAMBDAS: [f64; 4] = [0.01, 0.1, 0.5, 1.0];

fn variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let kind: ExtractorKind = args.get(1).map(String::as_str).unwrap_or("avg").parse()?;
    let arm = match args.get(2).map(String::as_str) {
        None | Some("zero-shot") => Arm::ZeroShot,
        Some("low-resource") => Arm::LowResource,
        Some(other) => return Err(format!("unknown regime {other}").into()),
    };

    for loss in [CriticLoss::Wasserstein, CriticLoss::Ce] {
        let mut sep = vec![0.0; LAMBDAS.len()];
        let mut acc = vec![0.0; LAMBDAS.len()];
        for seed in 0..seeds {
            let synth = synth_generate(&SynthSpec::default(), seed)?;
            let data = arm_data(&synth, seed, arm)?;
            for (i, &lambda) in LAMBDAS.iter().enumerate() {
                let cfg = dann::trainer::DannConfig { lambda, critic_loss: loss, ..desk_config(kind, seed) };
                let (model, history) = run_arm(&synth, &synth.table, &cfg, arm)?;
                let report = feature_report(&model, &data, &ReportOptions { seed, ..ReportOptions::default() })?;
                sep[i] += report.domain_sep / seeds as f64;
                acc[i] += final_target_accuracy(&history) / seeds as f64;
            }
        }
        println!("{loss} ({arm}):");
        for (i, lambda) in LAMBDAS.iter().enumerate() {
            println!("  lambda {lambda:<5} sep {:.4} tgt acc {:.3}", sep[i], acc[i]);
        }
        println!("  accuracy variance {:.6}", variance(&acc));
    }
    Ok(())
}
