use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{JsonlSchema, RatingScheme, SamplingPlan, ShiftMode, SynthSpec};
use crate::error::{Error, Result};
use crate::extractors::{ExtractorConfig, ExtractorKind};
use crate::rng::sub_seed;
use crate::trainer::{CriticLoss, DannConfig, DEFAULT_LAMBDA, DEFAULT_LAMBDA_CROSS_LINGUAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Jsonl,
    Synthetic,
}

/// Everything a run needs, as one flat JSON object. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub data_source: DataSource,
    /// JSON Lines files, concatenated in order.
    pub corpus: Vec<PathBuf>,
    pub text_field: String,
    pub label_field: String,
    pub domain_field: Option<String>,
    pub default_domain: String,
    pub id_field: Option<String>,
    pub rating_scheme: RatingScheme,
    pub strict: bool,
    /// Word vectors per domain name; the key `"*"` applies to every domain.
    pub embeddings: BTreeMap<String, PathBuf>,
    /// Name of the target domain (defaults to the last one).
    pub target_domain: Option<String>,

    pub synth_vocab_size: usize,
    pub synth_dim: usize,
    pub synth_source_docs: usize,
    pub synth_target_docs: usize,
    pub synth_source_domains: usize,
    pub synth_shift: ShiftMode,
    pub synth_shift_scale: f64,
    pub synth_shift_alignment: f64,

    pub n_tgt: usize,
    pub train_fraction: f64,
    pub zero_shot: bool,

    pub extractor: ExtractorKind,
    /// Defaults to 0.1, or 0.5 with `cross_lingual`.
    pub lambda: Option<f64>,
    pub n_critic: usize,
    pub clip: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub critic_loss: CriticLoss,
    pub n_domains: usize,
    pub one_vs_rest: bool,
    pub adversarial: bool,
    pub cross_lingual: bool,
    pub freeze_source_projection: bool,
    pub train_embeddings: bool,
    pub trainable_oov: bool,
    pub critic_hidden: usize,
    pub steps_per_epoch: Option<usize>,
    pub patience: Option<usize>,
    pub dense_units: usize,
    pub cnn_widths: Vec<usize>,
    pub cnn_maps: usize,
    pub cnn_dropout: f64,
    pub cnn_max_norm: f64,
    pub gru_hidden: usize,
    pub max_len: usize,

    /// λ values of `sweep`.
    pub lambdas: Vec<f64>,
    /// Critic losses of `sweep`.
    pub sweep_losses: Vec<CriticLoss>,
    /// Seeds of `sweep`; defaults to the run seed.
    pub sweep_seeds: Vec<u64>,
    pub report_max_per_group: usize,
    pub report_top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DannConfig::default();
        let e = ExtractorConfig::default();
        let s = SynthSpec::default();
        let j = JsonlSchema::default();
        let p = SamplingPlan::default();
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            data_source: DataSource::Jsonl,
            corpus: Vec::new(),
            text_field: j.text_field,
            label_field: j.label_field,
            domain_field: j.domain_field,
            default_domain: j.default_domain,
            id_field: j.id_field,
            rating_scheme: j.scheme,
            strict: j.strict,
            embeddings: BTreeMap::new(),
            target_domain: None,
            synth_vocab_size: s.vocab_size,
            synth_dim: s.dim,
            synth_source_docs: s.source_docs,
            synth_target_docs: s.target_docs,
            synth_source_domains: s.n_source_domains,
            synth_shift: s.shift,
            synth_shift_scale: s.shift_scale,
            synth_shift_alignment: s.shift_alignment,
            n_tgt: p.n_tgt,
            train_fraction: p.train_fraction,
            zero_shot: false,
            extractor: e.kind,
            lambda: None,
            n_critic: d.n_critic,
            clip: d.clip,
            lr: d.lr,
            batch_size: d.batch_size,
            epochs: d.epochs,
            critic_loss: d.critic_loss,
            n_domains: d.n_domains,
            one_vs_rest: d.one_vs_rest,
            adversarial: d.adversarial,
            cross_lingual: d.cross_lingual,
            freeze_source_projection: d.freeze_source_projection,
            train_embeddings: d.train_embeddings,
            trainable_oov: d.trainable_oov,
            critic_hidden: d.critic_hidden,
            steps_per_epoch: d.steps_per_epoch,
            patience: d.patience,
            dense_units: e.dense_units,
            cnn_widths: e.cnn_widths,
            cnn_maps: e.cnn_maps,
            cnn_dropout: e.cnn_dropout,
            cnn_max_norm: e.cnn_max_norm,
            gru_hidden: e.gru_hidden,
            max_len: e.max_len,
            lambdas: vec![0.01, 0.05, 0.1, 0.5, 0.75, 1.0],
            sweep_losses: vec![CriticLoss::Wasserstein],
            sweep_seeds: Vec::new(),
            report_max_per_group: 1000,
            report_top_k: 500,
        }
    }
}

/// Command-line values that override the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub extractor: Option<ExtractorKind>,
    pub lambda: Option<f64>,
    pub critic_loss: Option<CriticLoss>,
    pub zero_shot: bool,
    pub adversarial: Option<bool>,
    pub domains: Option<usize>,
}

impl RunConfig {
    /// Defaults, then the JSON object in `file` (if any), then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut merged = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let user: Value =
                serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let Value::Object(user) = user else {
                return Err(Error::config(format!("{}: expected a JSON object", path.display())));
            };
            let base: &mut Map<String, Value> = merged.as_object_mut().expect("struct serializes to an object");
            for (k, v) in user {
                base.insert(k, v);
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(merged).map_err(|e| {
            let origin = file.map(|p| p.display().to_string()).unwrap_or_else(|| "defaults".into());
            Error::config(format!("{origin}: {e}"))
        })?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.extractor {
            self.extractor = v;
        }
        if let Some(v) = o.lambda {
            self.lambda = Some(v);
        }
        if let Some(v) = o.critic_loss {
            self.critic_loss = v;
        }
        if o.zero_shot {
            self.zero_shot = true;
        }
        if let Some(v) = o.adversarial {
            self.adversarial = v;
        }
        if let Some(v) = o.domains {
            self.n_domains = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dann_config().validate()?;
        self.sampling_plan().validate()?;
        match self.data_source {
            DataSource::Jsonl => {
                if self.corpus.is_empty() {
                    return Err(Error::config("data_source jsonl needs at least one corpus file"));
                }
                for p in self.corpus.iter().chain(self.embeddings.values()) {
                    if !p.exists() {
                        return Err(Error::config(format!("{}: file does not exist", p.display())));
                    }
                }
                if self.embeddings.is_empty() {
                    return Err(Error::config("data_source jsonl needs embeddings"));
                }
            }
            DataSource::Synthetic => self.synth_spec().validate()?,
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(if self.cross_lingual {
            DEFAULT_LAMBDA_CROSS_LINGUAL
        } else {
            DEFAULT_LAMBDA
        })
    }

    pub fn extractor_config(&self) -> ExtractorConfig {
        ExtractorConfig {
            kind: self.extractor,
            dense_units: self.dense_units,
            cnn_widths: self.cnn_widths.clone(),
            cnn_maps: self.cnn_maps,
            cnn_dropout: self.cnn_dropout,
            cnn_max_norm: self.cnn_max_norm,
            gru_hidden: self.gru_hidden,
            max_len: self.max_len,
        }
    }

    pub fn dann_config(&self) -> DannConfig {
        DannConfig {
            extractor: self.extractor_config(),
            lambda: self.lambda(),
            n_critic: self.n_critic,
            clip: self.clip,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            critic_loss: self.critic_loss,
            n_domains: self.n_domains,
            one_vs_rest: self.one_vs_rest,
            adversarial: self.adversarial,
            seed: self.seed,
            cross_lingual: self.cross_lingual,
            freeze_source_projection: self.freeze_source_projection,
            train_embeddings: self.train_embeddings,
            trainable_oov: self.trainable_oov,
            critic_hidden: self.critic_hidden,
            steps_per_epoch: self.steps_per_epoch,
            patience: self.patience,
        }
    }

    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            n_tgt: self.n_tgt,
            train_fraction: self.train_fraction,
            seed: sub_seed(self.seed, "sampling"),
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            vocab_size: self.synth_vocab_size,
            dim: self.synth_dim,
            source_docs: self.synth_source_docs,
            target_docs: self.synth_target_docs,
            n_source_domains: self.synth_source_domains,
            shift: self.synth_shift,
            shift_scale: self.synth_shift_scale,
            shift_alignment: self.synth_shift_alignment,
            ..SynthSpec::default()
        }
    }

    pub fn schema(&self) -> JsonlSchema {
        JsonlSchema {
            text_field: self.text_field.clone(),
            label_field: self.label_field.clone(),
            domain_field: self.domain_field.clone(),
            default_domain: self.default_domain.clone(),
            id_field: self.id_field.clone(),
            scheme: self.rating_scheme,
            strict: self.strict,
        }
    }
}
