//! Resolves a run configuration the way the `dann` binary does (defaults,
//! then a JSON file, then flag overrides), trains, and evaluates the saved
//! checkpoint.
//!
//! ```text
//! cargo run --release --example run_config -- [out_dir]
//! ```

use std::path::PathBuf;

use dann::cli::{cmd_eval, cmd_train, Overrides, RunConfig};
use dann::extractors::ExtractorKind;

const CONFIG: &str = r#"{
    "data_source": "synthetic",
    "synth_source_docs": 500,
    "synth_target_docs": 500,
    "n_tgt": 100,
    "epochs": 3,
    "lambda": 0.3
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dann-run-config"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let path = out.join("input.json");
    std::fs::write(&path, CONFIG)?;

    let overrides = Overrides {
        out: Some(out.clone()),
        seed: Some(4),
        extractor: Some(ExtractorKind::Tfidf),
        ..Overrides::default()
    };
    let cfg = RunConfig::resolve(Some(&path), &overrides)?;
    println!("extractor {}, lambda {}, epochs {}, seed {}", cfg.extractor, cfg.lambda(), cfg.epochs, cfg.seed);

    let trained = cmd_train(&cfg)?;
    println!("train: {}", serde_json::to_string(&trained)?);
    let evaluated = cmd_eval(&cfg, None)?;
    println!("eval:  {}", serde_json::to_string(&evaluated)?);
    println!("outputs in {}", out.display());
    Ok(())
}
