//! Central finite-difference checks of tape gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Worst disagreement found by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error with a floor on the denominator so that gradients that are
/// zero up to rounding do not blow up the ratio.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of `f` with central differences of step `h`
/// for every element of the listed parameters. `f` must build a fresh graph
/// and return a scalar; it is called `2n + 1` times. Store gradients of `ids`
/// are overwritten.
pub fn check_gradients<F>(store: &mut ParamStore, ids: &[ParamId], h: f64, floor: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad(ids);
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        worst_index: 0,
        checked: 0,
    };
    for &id in ids {
        let analytic = store.grad(id).clone();
        for i in 0..analytic.len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let plus = eval(store, &mut f)?;
            store.value_mut(id).data_mut()[i] = orig - h;
            let minus = eval(store, &mut f)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = rel_err(analytic.data()[i], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = Some(store.name(id).to_string());
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

fn eval<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = f(&mut tape, store)?;
    tape.value(v).item()
}
