//! Desk-scale settings for the synthetic benchmarks.
//!
//! Extractors are narrowed and schedules shortened so that multi-seed
//! comparisons fit on a single CPU core. Everything else (λ, n_critic, clip,
//! learning rate, batch size) keeps the library defaults.

use std::fmt;

use crate::data::{make_splits, PreparedData, SamplingPlan, SynthData};
use crate::embeddings::EmbeddingTable;
use crate::error::Result;
use crate::extractors::{ExtractorConfig, ExtractorKind};
use crate::trainer::{train, DannConfig, DannModel, TrainHistory, TrainOptions};

pub fn desk_extractor(kind: ExtractorKind) -> ExtractorConfig {
    ExtractorConfig {
        kind,
        cnn_maps: 16,
        gru_hidden: 16,
        max_len: 30,
        ..ExtractorConfig::default()
    }
}

pub fn desk_epochs(kind: ExtractorKind) -> usize {
    match kind {
        ExtractorKind::Avg | ExtractorKind::Tfidf => 10,
        ExtractorKind::Cnn | ExtractorKind::Han => 3,
    }
}

pub fn desk_config(kind: ExtractorKind, seed: u64) -> DannConfig {
    DannConfig {
        extractor: desk_extractor(kind),
        epochs: desk_epochs(kind),
        seed,
        ..DannConfig::default()
    }
}

/// The three training regimes compared on the benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    /// Source labels only, no critic.
    SourceOnly,
    /// Adversarial, no target labels.
    ZeroShot,
    /// Adversarial with the default labeled target sample.
    LowResource,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::SourceOnly, Arm::ZeroShot, Arm::LowResource];

    pub fn zero_shot(self) -> bool {
        self != Arm::LowResource
    }

    pub fn adversarial(self) -> bool {
        self != Arm::SourceOnly
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::SourceOnly => "source-only",
            Arm::ZeroShot => "zero-shot",
            Arm::LowResource => "low-resource",
        })
    }
}

/// The splits `run_arm` trains on for `seed`.
pub fn arm_data(synth: &SynthData, seed: u64, arm: Arm) -> Result<PreparedData> {
    let plan = SamplingPlan {
        seed,
        ..SamplingPlan::default()
    };
    make_splits(&synth.corpus, synth.target_domain, &plan, arm.zero_shot())
}

/// Trains `cfg` on `synth` under one regime; the sampling seed follows `cfg.seed`.
pub fn run_arm(
    synth: &SynthData,
    table: &EmbeddingTable,
    cfg: &DannConfig,
    arm: Arm,
) -> Result<(DannModel, TrainHistory)> {
    let data = arm_data(synth, cfg.seed, arm)?;
    let cfg = DannConfig {
        adversarial: arm.adversarial(),
        ..cfg.clone()
    };
    train(&cfg, &data, table, &TrainOptions::default())
}

/// Final-epoch target accuracy, or NaN when the history carries none.
pub fn final_target_accuracy(history: &TrainHistory) -> f64 {
    history.last().and_then(|r| r.tgt_acc).unwrap_or(f64::NAN)
}
