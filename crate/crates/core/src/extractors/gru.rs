use std::ops::Range;

use rand::Rng;

use crate::autodiff::{glorot_uniform, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::bind;

/// Weights of one GRU direction in row-vector form: gate pre-activations are
/// `x Wx + b` split into `[z | r | h]` blocks, plus `h U_zr` and `(r * h) U_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub wx: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub b: ParamId,
}

impl GruParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        GruParams {
            wx: store.add(
                format!("{name}.wx"),
                glorot_uniform(rng, &[input, 3 * hidden], input, hidden),
                true,
            ),
            u_zr: store.add(
                format!("{name}.u_zr"),
                glorot_uniform(rng, &[hidden, 2 * hidden], hidden, hidden),
                true,
            ),
            u_h: store.add(
                format!("{name}.u_h"),
                glorot_uniform(rng, &[hidden, hidden], hidden, hidden),
                true,
            ),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[3 * hidden]), true),
        }
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.value(self.u_h).rows()
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.wx, self.u_zr, self.u_h, self.b]
    }
}

struct Bound {
    wx: Var,
    u_zr: Var,
    u_h: Var,
    b: Var,
    hidden: usize,
}

fn bind_all(tape: &mut Tape, store: &ParamStore, p: &GruParams) -> Result<Bound> {
    Ok(Bound {
        wx: bind(tape, store, p.wx, false)?,
        u_zr: bind(tape, store, p.u_zr, false)?,
        u_h: bind(tape, store, p.u_h, false)?,
        b: bind(tape, store, p.b, false)?,
        hidden: p.hidden(store),
    })
}

/// One update given the precomputed input projection `xw = x Wx + b`.
fn step(tape: &mut Tape, g: &Bound, xw: Var, h: Var) -> Result<Var> {
    let n = g.hidden;
    let hu = tape.matmul(h, g.u_zr)?;
    let xz = tape.slice_cols(xw, 0, n)?;
    let xr = tape.slice_cols(xw, n, n)?;
    let xh = tape.slice_cols(xw, 2 * n, n)?;
    let hz = tape.slice_cols(hu, 0, n)?;
    let hr = tape.slice_cols(hu, n, n)?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z)?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, h)?;
    let rhu = tape.matmul(rh, g.u_h)?;
    let cand = tape.add(xh, rhu)?;
    let cand = tape.tanh(cand)?;
    // (1 - z) * h + z * cand
    let diff = tape.sub(cand, h)?;
    let zd = tape.mul(z, diff)?;
    tape.add(h, zd)
}

/// A single GRU update for a batch of rows `x: [B x in]`, `h_prev: [B x H]`.
pub fn gru_cell(tape: &mut Tape, store: &ParamStore, p: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let g = bind_all(tape, store, p)?;
    let hv = tape.value(h_prev);
    if hv.cols() != g.hidden || hv.rows() != tape.value(x).rows() {
        return Err(Error::Shape {
            op: "gru_cell",
            lhs: tape.value(x).shape().to_vec(),
            rhs: hv.shape().to_vec(),
        });
    }
    let xw = tape.matmul(x, g.wx)?;
    let xw = tape.add(xw, g.b)?;
    step(tape, &g, xw, h_prev)
}

/// Runs the GRU over each sequence of rows of `x` (given as row ranges),
/// all sequences advancing in lockstep. Returns the hidden state at every
/// input row, `[rows(x) x H]`; rows outside every sequence are zero.
pub fn run_gru(tape: &mut Tape, store: &ParamStore, p: &GruParams, x: Var, seqs: &[Range<usize>], reverse: bool) -> Result<Var> {
    let n_rows = tape.value(x).rows();
    if seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::empty("run_gru", "sequence"));
    }
    if seqs.iter().any(|s| s.end > n_rows) {
        return Err(Error::invalid("run_gru: sequence exceeds input rows"));
    }
    let g = bind_all(tape, store, p)?;
    let h_dim = g.hidden;
    let xw = tape.matmul(x, g.wx)?;
    let xw = tape.add(xw, g.b)?;
    let s = seqs.len();
    let steps = seqs.iter().map(|r| r.len()).max().unwrap_or(0);
    let pos = |r: &Range<usize>, t: usize| if reverse { r.end - 1 - t } else { r.start + t };
    let mut h = tape.constant(Tensor::zeros(&[s, h_dim]))?;
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let rows: Vec<Option<usize>> = seqs.iter().map(|r| (t < r.len()).then(|| pos(r, t))).collect();
        let all_active = rows.iter().all(Option::is_some);
        let xt = tape.gather_rows(xw, rows)?;
        let h_new = step(tape, &g, xt, h)?;
        h = if all_active {
            h_new
        } else {
            let mask: Vec<f64> = seqs
                .iter()
                .flat_map(|r| std::iter::repeat(if t < r.len() { 1.0 } else { 0.0 }).take(h_dim))
                .collect();
            let mask = tape.constant(Tensor::matrix(s, h_dim, mask)?)?;
            let d = tape.sub(h_new, h)?;
            let d = tape.mul(mask, d)?;
            tape.add(h, d)?
        };
        outs.push(h);
    }
    let all = tape.concat(&outs, 0)?;
    let mut map = vec![None; n_rows];
    for (i, r) in seqs.iter().enumerate() {
        for t in 0..r.len() {
            map[pos(r, t)] = Some(t * s + i);
        }
    }
    tape.gather_rows(all, map)
}
