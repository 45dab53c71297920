use rand::Rng;

use super::model::{critic_objective, DannModel};
use crate::autodiff::{clip_store, GrlConfig, Tape};
use crate::error::{Error, Result};
use crate::extractors::{EncodedDoc, ExtractorParams};

/// Losses reported by one joint update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointStepOut {
    /// Cross-entropy of the label predictor on the labeled batch.
    pub p_loss: f64,
    /// Critic objective seen through the reversal layer, when adversarial.
    pub adversarial: Option<f64>,
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged {
            epoch: 0,
            msg: format!("{what} is {v}"),
        })
    }
}

/// One update of the critic on fixed features. The extractor output is
/// detached, so only Q moves; Q is clipped to `[-clip, clip]` afterwards.
/// Returns the critic loss before the update.
pub fn critic_step<R: Rng>(model: &mut DannModel, src: &[&EncodedDoc], tgt: &[&EncodedDoc], rng: &mut R) -> Result<f64> {
    if src.is_empty() {
        return Err(Error::empty("critic_step", "source batch"));
    }
    if tgt.is_empty() {
        return Err(Error::empty("critic_step", "target batch"));
    }
    let docs: Vec<&EncodedDoc> = src.iter().chain(tgt).copied().collect();
    let labels = docs
        .iter()
        .map(|d| model.critic_label(d.domain))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let f = model.features(&mut tape, &docs, rng)?;
    let z = tape.detach(f.z)?;
    let scores = model.critic.forward(&mut tape, &model.store, z, false)?;
    let loss = critic_objective(&mut tape, scores, &labels, &model.config)?;
    let value = finite("critic loss", tape.value(loss).item()?)?;
    model.q_opt.zero_grad(&mut model.store);
    tape.backward(loss, &mut model.store)?;
    model.q_opt.step(&mut model.store)?;
    let ids = model.q_params();
    clip_store(&mut model.store, &ids, model.config.clip)?;
    Ok(value)
}

/// One update of F, P and the projections: cross-entropy on `labeled` plus
/// the critic objective on the source part of `labeled` against
/// `unlabeled_tgt`, passed through a gradient reversal layer with weight λ
/// and a frozen Q.
///
/// Dropout for the labeled documents draws from `p_rng` and for the
/// unlabeled ones from `c_rng`, so that the supervised path consumes the
/// same random numbers whether or not the adversarial term is present.
pub fn joint_step<R1: Rng, R2: Rng>(
    model: &mut DannModel,
    labeled: &[&EncodedDoc],
    unlabeled_tgt: &[&EncodedDoc],
    p_rng: &mut R1,
    c_rng: &mut R2,
) -> Result<JointStepOut> {
    if labeled.is_empty() {
        return Err(Error::empty("joint_step", "labeled batch"));
    }
    let labels = labeled
        .iter()
        .map(|d| d.label.ok_or_else(|| Error::invalid("joint_step: labeled batch holds an unlabeled document")))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let f = model.features(&mut tape, labeled, p_rng)?;
    let logits = model.predictor.forward(&mut tape, &model.store, f.z, false)?;
    let ce = tape.cross_entropy(logits, &labels)?;
    let p_loss = finite("predictor loss", tape.value(ce).item()?)?;

    let target = model.spec.target_domain;
    let src_rows: Vec<usize> = (0..labeled.len()).filter(|&i| labeled[i].domain != target).collect();
    let mut loss = ce;
    let mut adversarial = None;
    if model.config.adversarial && !unlabeled_tgt.is_empty() && !src_rows.is_empty() {
        let zs = if src_rows.len() == labeled.len() {
            f.z
        } else {
            tape.gather_rows(f.z, src_rows.iter().map(|&i| Some(i)).collect())?
        };
        let ft = model.features(&mut tape, unlabeled_tgt, c_rng)?;
        let z = tape.concat(&[zs, ft.z], 0)?;
        let z = tape.grl(z, GrlConfig::new(model.config.lambda)?)?;
        let scores = model.critic.forward(&mut tape, &model.store, z, true)?;
        let critic_labels = src_rows
            .iter()
            .map(|&i| labeled[i].domain)
            .chain(unlabeled_tgt.iter().map(|d| d.domain))
            .map(|d| model.critic_label(d))
            .collect::<Result<Vec<_>>>()?;
        let q = critic_objective(&mut tape, scores, &critic_labels, &model.config)?;
        adversarial = Some(finite("critic loss", tape.value(q).item()?)?);
        loss = tape.add(ce, q)?;
    }
    model.p_opt.zero_grad(&mut model.store);
    tape.backward(loss, &mut model.store)?;
    model.p_opt.step(&mut model.store)?;
    if let ExtractorParams::Cnn { .. } = model.extractor.params {
        let s = model.config.extractor.cnn_max_norm;
        if s > 0.0 {
            model.predictor.max_norm(&mut model.store, s);
        }
    }
    for id in model.p_params() {
        if !model.store.value(id).is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                msg: format!("parameter {} became non-finite", model.store.name(id)),
            });
        }
    }
    Ok(JointStepOut { p_loss, adversarial })
}
