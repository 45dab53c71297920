use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// `-log softmax(logits)[label]` for a single logit vector.
pub fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    let n = tape.value(logits).len();
    let flat = tape.reshape(logits, &[1, n])?;
    tape.cross_entropy(flat, &[label])
}

/// `mean(scores_src) - mean(scores_tgt)`, the critic's estimate of the
/// Wasserstein distance between the two feature distributions.
pub fn wasserstein_loss(tape: &mut Tape, scores_src: Var, scores_tgt: Var) -> Result<Var> {
    if tape.value(scores_src).is_empty() {
        return Err(Error::empty("wasserstein_loss", "source batch"));
    }
    if tape.value(scores_tgt).is_empty() {
        return Err(Error::empty("wasserstein_loss", "target batch"));
    }
    let ms = tape.mean(scores_src, None)?;
    let mt = tape.mean(scores_tgt, None)?;
    tape.sub(ms, mt)
}
