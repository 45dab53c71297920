use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::checkpoint::save_checkpoint;
use super::config::DannConfig;
use super::model::{build_model, DannModel, DataSpec};
use super::steps::{critic_step, joint_step};
use crate::data::{BatchIter, PreparedData};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::extractors::EncodedDoc;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean predictor loss over the epoch's joint steps.
    pub p_loss: f64,
    /// Mean critic loss over the epoch's critic steps (adversarial runs only).
    pub q_loss: Option<f64>,
    pub src_acc: Option<f64>,
    pub tgt_acc: Option<f64>,
    pub lambda: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainHistory {
    /// CSV with header `epoch,p_loss,q_loss,src_acc,tgt_acc,lambda,seconds`.
    /// The `seconds` column is left empty unless `with_time` is set, which
    /// keeps the file identical across runs with the same seed.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut s = String::from("epoch,p_loss,q_loss,src_acc,tgt_acc,lambda,seconds\n");
        for r in &self.records {
            let secs = if with_time { format!("{:.3}", r.seconds) } else { String::new() };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.p_loss,
                opt(r.q_loss),
                opt(r.src_acc),
                opt(r.tgt_acc),
                r.lambda,
                secs
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path, with_time: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(with_time)).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Written after the last epoch.
    pub checkpoint: Option<PathBuf>,
    /// Log one line per epoch at info level.
    pub verbose: bool,
}

/// Fraction of documents whose predicted class equals the gold label.
pub fn evaluate(model: &DannModel, docs: &[EncodedDoc]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::empty("evaluate", "dataset"));
    }
    let refs: Vec<&EncodedDoc> = docs.iter().collect();
    let pred = model.predict(&refs)?;
    let mut correct = 0;
    for (p, d) in pred.iter().zip(docs) {
        let y = d.label.ok_or_else(|| Error::invalid("evaluate: unlabeled document"))?;
        correct += usize::from(*p == y);
    }
    Ok(correct as f64 / docs.len() as f64)
}

/// Statistics of one outer iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub p_loss: f64,
    /// Mean loss of the iteration's critic steps.
    pub q_loss: Option<f64>,
}

/// Encoded splits plus the independent random streams of a training run.
///
/// Source and labeled-target batches and the supervised dropout come from
/// the P-path streams; the critic's batches, the unlabeled target batches
/// of the joint step and the critic-side dropout come from separate critic
/// streams. Turning the adversarial term off therefore leaves the P path's
/// random sequence untouched.
pub struct Trainer {
    pub model: DannModel,
    pub source_train: Vec<EncodedDoc>,
    pub source_test: Vec<EncodedDoc>,
    pub target_labeled: Vec<EncodedDoc>,
    pub target_unlabeled: Vec<EncodedDoc>,
    pub target_test: Vec<EncodedDoc>,
    src_batches: BatchIter<ChaCha8Rng>,
    tgt_batches: BatchIter<ChaCha8Rng>,
    critic_src: BatchIter<ChaCha8Rng>,
    critic_tgt: BatchIter<ChaCha8Rng>,
    p_dropout: ChaCha8Rng,
    c_dropout: ChaCha8Rng,
    steps: usize,
}

impl Trainer {
    pub fn new(model: DannModel, data: &PreparedData) -> Result<Self> {
        if data.source_train.is_empty() {
            return Err(Error::empty("train", "source training set"));
        }
        if data.zero_shot && data.target_labeled.iter().any(|d| d.label.is_some()) {
            return Err(Error::invalid("zero-shot data exposes target labels"));
        }
        let seed = model.config.seed;
        let bs = model.config.batch_size;
        let source_train = model.encode_all(&data.source_train)?;
        let target_labeled = model.encode_all(&data.target_labeled)?;
        let target_unlabeled = model.encode_all(&data.target_unlabeled)?;
        if model.config.adversarial && target_unlabeled.is_empty() {
            return Err(Error::empty("train", "unlabeled target stream"));
        }
        Ok(Trainer {
            src_batches: BatchIter::new(source_train.len(), bs, rng::stream(seed, "shuffle.source")),
            tgt_batches: BatchIter::new(target_labeled.len(), bs, rng::stream(seed, "shuffle.target")),
            critic_src: BatchIter::new(source_train.len(), bs, rng::stream(seed, "critic.source")),
            critic_tgt: BatchIter::new(target_unlabeled.len(), bs, rng::stream(seed, "critic.target")),
            p_dropout: rng::stream(seed, "dropout"),
            c_dropout: rng::stream(seed, "critic.dropout"),
            source_test: model.encode_all(&data.source_test)?,
            target_test: model.encode_all(&data.target_test)?,
            source_train,
            target_labeled,
            target_unlabeled,
            model,
            steps: 0,
        })
    }

    /// Joint updates per epoch.
    pub fn steps_per_epoch(&self) -> usize {
        let bs = self.model.config.batch_size;
        self.model
            .config
            .steps_per_epoch
            .unwrap_or_else(|| self.source_train.len().div_ceil(bs))
            .max(1)
    }

    /// Joint steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One critic update on fresh critic batches.
    pub fn critic_update(&mut self) -> Result<f64> {
        let s = self.critic_src.next().expect("non-empty source");
        let t = self.critic_tgt.next().expect("non-empty target stream");
        let src: Vec<&EncodedDoc> = s.iter().map(|&i| &self.source_train[i]).collect();
        let tgt: Vec<&EncodedDoc> = t.iter().map(|&i| &self.target_unlabeled[i]).collect();
        critic_step(&mut self.model, &src, &tgt, &mut self.c_dropout)
    }

    /// `n_critic` critic updates (adversarial runs) followed by one joint update.
    pub fn outer_step(&mut self) -> Result<StepStats> {
        let mut q_loss = None;
        if self.model.config.adversarial {
            let mut sum = 0.0;
            for _ in 0..self.model.config.n_critic {
                sum += self.critic_update()?;
            }
            q_loss = Some(sum / self.model.config.n_critic as f64);
        }
        let p_loss = self.joint_update()?;
        Ok(StepStats { p_loss, q_loss })
    }

    /// One joint update of F and P (and the reversed critic term in adversarial runs).
    pub fn joint_update(&mut self) -> Result<f64> {
        let s = self.src_batches.next().expect("non-empty source");
        let mut labeled: Vec<&EncodedDoc> = s.iter().map(|&i| &self.source_train[i]).collect();
        if let Some(t) = self.tgt_batches.next() {
            labeled.extend(t.iter().map(|&i| &self.target_labeled[i]));
        }
        let unlabeled: Vec<&EncodedDoc> = if self.model.config.adversarial {
            let t = self.critic_tgt.next().expect("non-empty target stream");
            t.iter().map(|&i| &self.target_unlabeled[i]).collect()
        } else {
            Vec::new()
        };
        let out = joint_step(&mut self.model, &labeled, &unlabeled, &mut self.p_dropout, &mut self.c_dropout)?;
        self.steps += 1;
        Ok(out.p_loss)
    }

    /// Accuracy on the pooled source test set and on the target test set.
    pub fn evaluate_splits(&self) -> Result<(Option<f64>, Option<f64>)> {
        let acc = |docs: &[EncodedDoc]| -> Result<Option<f64>> {
            if docs.is_empty() {
                Ok(None)
            } else {
                evaluate(&self.model, docs).map(Some)
            }
        };
        Ok((acc(&self.source_test)?, acc(&self.target_test)?))
    }

    /// Runs the configured number of epochs (or until patience runs out).
    pub fn run(&mut self, opts: &TrainOptions) -> Result<TrainHistory> {
        let mut history = TrainHistory::default();
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0;
        for epoch in 1..=self.model.config.epochs {
            let start = Instant::now();
            let n = self.steps_per_epoch();
            let (mut p_sum, mut q_sum) = (0.0, 0.0);
            for _ in 0..n {
                let s = self.outer_step().map_err(|e| match e {
                    Error::Diverged { msg, .. } => Error::Diverged { epoch, msg },
                    other => other,
                })?;
                p_sum += s.p_loss;
                q_sum += s.q_loss.unwrap_or(0.0);
            }
            let (src_acc, tgt_acc) = self.evaluate_splits()?;
            let record = EpochRecord {
                epoch,
                p_loss: p_sum / n as f64,
                q_loss: self.model.config.adversarial.then(|| q_sum / n as f64),
                src_acc,
                tgt_acc,
                lambda: self.model.config.lambda,
                seconds: start.elapsed().as_secs_f64(),
            };
            if opts.verbose {
                log::info!(
                    "epoch {epoch}: p_loss {:.4} q_loss {} src_acc {} tgt_acc {} ({:.1}s)",
                    record.p_loss,
                    opt(record.q_loss),
                    opt(record.src_acc),
                    opt(record.tgt_acc),
                    record.seconds
                );
            }
            history.records.push(record);
            if let (Some(patience), Some(acc)) = (self.model.config.patience, src_acc) {
                if acc > best {
                    best = acc;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= patience {
                        break;
                    }
                }
            }
        }
        if let Some(path) = &opts.checkpoint {
            save_checkpoint(&self.model, path)?;
        }
        Ok(history)
    }
}

/// Builds a model for `data` and trains it.
pub fn train(
    cfg: &DannConfig,
    data: &PreparedData,
    table: &EmbeddingTable,
    opts: &TrainOptions,
) -> Result<(DannModel, TrainHistory)> {
    let spec = DataSpec::from_prepared(data, cfg)?;
    let model = build_model(cfg, &spec, table)?;
    let mut trainer = Trainer::new(model, data)?;
    let history = trainer.run(opts)?;
    Ok((trainer.model, history))
}
