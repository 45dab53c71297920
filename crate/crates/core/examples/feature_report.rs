//! Feature-space diagnostics of a non-adversarial and an adversarial model:
//! domain and class separation, the leading PCA variances, and the first
//! few projected points.
//!
//! ```text
//! cargo run --release --example feature_report -- [seed] [extractor]
//! ```

use dann::bench::{arm_data, desk_config, run_arm, Arm};
use dann::data::{synth_generate, SynthSpec};
use dann::diagnostics::{feature_report, ReportOptions};
use dann::extractors::ExtractorKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let kind: ExtractorKind = args.get(1).map(String::as_str).unwrap_or("avg").parse()?;

    let synth = synth_generate(&SynthSpec::default(), seed)?;
    let opts = ReportOptions {
        max_per_group: 300,
        seed,
        ..ReportOptions::default()
    };
    for arm in [Arm::SourceOnly, Arm::ZeroShot] {
        let (model, _) = run_arm(&synth, &synth.table, &desk_config(kind, seed), arm)?;
        let report = feature_report(&model, &arm_data(&synth, seed, arm)?, &opts)?;
        println!(
            "{arm}: {} points, domain sep {:.4}, class sep {:.4}, PCA variances {:.4} {:.4}",
            report.n_points,
            report.domain_sep,
            report.class_sep.unwrap_or(f64::NAN),
            report.explained_variance[0],
            report.explained_variance[1]
        );
        for p in report.points.iter().take(3) {
            println!("  ({:+.3}, {:+.3}) {} {}", p.x, p.y, p.domain, p.class.as_deref().unwrap_or("-"));
        }
    }
    Ok(())
}
