use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractors::ExtractorConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticLoss {
    /// Critic maximizes mean score on source minus mean score on target.
    Wasserstein,
    /// Critic is a domain classifier trained with cross-entropy.
    Ce,
}

impl fmt::Display for CriticLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriticLoss::Wasserstein => "wasserstein",
            CriticLoss::Ce => "ce",
        })
    }
}

impl FromStr for CriticLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wasserstein" => Ok(CriticLoss::Wasserstein),
            "ce" => Ok(CriticLoss::Ce),
            _ => Err(Error::config(format!("unknown critic loss {s:?} (expected wasserstein or ce)"))),
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_LAMBDA_CROSS_LINGUAL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DannConfig {
    pub extractor: ExtractorConfig,
    /// Weight of the reversed critic gradient reaching the extractor.
    pub lambda: f64,
    /// Critic updates per joint update.
    pub n_critic: usize,
    /// Critic parameters are clipped to `[-clip, clip]` after each update.
    pub clip: f64,
    pub lr: f64,
    /// Size of each sub-batch (source, target labeled, target unlabeled).
    pub batch_size: usize,
    pub epochs: usize,
    pub critic_loss: CriticLoss,
    /// Domains the critic tells apart: 2 pools all sources against the target.
    pub n_domains: usize,
    /// Allows the Wasserstein critic with more than two domains via
    /// per-domain one-vs-rest estimates.
    pub one_vs_rest: bool,
    pub adversarial: bool,
    pub seed: u64,
    /// Learn a projection per domain on top of the word vectors.
    pub cross_lingual: bool,
    /// Keep the source projections fixed at the identity.
    pub freeze_source_projection: bool,
    pub train_embeddings: bool,
    pub trainable_oov: bool,
    pub critic_hidden: usize,
    /// Joint updates per epoch; defaults to one pass over the source training set.
    pub steps_per_epoch: Option<usize>,
    /// Stop after this many epochs without source-test improvement.
    pub patience: Option<usize>,
}

impl Default for DannConfig {
    fn default() -> Self {
        DannConfig {
            extractor: ExtractorConfig::default(),
            lambda: DEFAULT_LAMBDA,
            n_critic: 5,
            clip: 0.01,
            lr: 0.01,
            batch_size: 32,
            epochs: 30,
            critic_loss: CriticLoss::Wasserstein,
            n_domains: 2,
            one_vs_rest: false,
            adversarial: true,
            seed: 0,
            cross_lingual: false,
            freeze_source_projection: false,
            train_embeddings: false,
            trainable_oov: false,
            critic_hidden: 100,
            steps_per_epoch: None,
            patience: None,
        }
    }
}

impl DannConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.n_critic == 0 {
            return fail("n_critic must be >= 1".into());
        }
        if !(self.clip > 0.0) {
            return fail(format!("clip must be > 0, got {}", self.clip));
        }
        if !(self.lr > 0.0) {
            return fail(format!("learning rate must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.n_domains < 2 {
            return fail(format!("n_domains must be >= 2, got {}", self.n_domains));
        }
        if self.critic_loss == CriticLoss::Wasserstein && self.n_domains > 2 && !self.one_vs_rest {
            return fail(format!(
                "the Wasserstein critic compares two distributions; with n_domains = {} enable one_vs_rest \
                 or use the ce critic loss",
                self.n_domains
            ));
        }
        if self.critic_hidden == 0 {
            return fail("critic_hidden must be >= 1".into());
        }
        self.extractor.validate()
    }

    /// Output units of the critic.
    pub fn critic_arity(&self) -> usize {
        match (self.critic_loss, self.n_domains) {
            (CriticLoss::Wasserstein, 2) => 1,
            (_, n) => n,
        }
    }
}
