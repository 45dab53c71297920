use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Source of one row in an embedding lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowRef {
    Token(usize),
    /// Out-of-vocabulary token: the table's OOV vector.
    Oov,
    /// Zero padding; never receives gradient.
    Pad,
}

/// Gradient-reversal settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrlConfig {
    lambda: f64,
}

impl GrlConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("GRL lambda must be >= 0, got {lambda}")));
        }
        Ok(GrlConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Constant,
    /// Differentiable leaf that does not live in a parameter store.
    Variable,
    Param(ParamId),
    Embed {
        table: ParamId,
        oov: ParamId,
        rows: Vec<RowRef>,
    },
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    Add {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Sum {
        x: Var,
        axis: Option<usize>,
    },
    Mean {
        x: Var,
        axis: Option<usize>,
    },
    SegmentMax {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Gather {
        x: Var,
        rows: Vec<Option<usize>>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Grl {
        x: Var,
        lambda: f64,
    },
    Reshape(Var),
    Conv1d {
        x: Var,
        w: Var,
        width: usize,
        seg_len: usize,
    },
    SegmentSoftmax {
        x: Var,
        segments: Vec<Range<usize>>,
    },
    SegmentWeightedSum {
        rows: Var,
        weights: Var,
        segments: Vec<Range<usize>>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Variable => "variable",
            Op::Param(_) => "param",
            Op::Embed { .. } => "embed",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add { .. } => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Softmax { .. } => "softmax",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::SegmentMax { .. } => "segment_max",
            Op::Concat { .. } => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather",
            Op::Dropout { .. } => "dropout",
            Op::Grl { .. } => "grl",
            Op::Reshape(_) => "reshape",
            Op::Conv1d { .. } => "conv1d",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::SegmentWeightedSum { .. } => "segment_weighted_sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    pub fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Variable | Op::Param(_) | Op::Embed { .. } => vec![],
            Op::MatMul(a, b) | Op::MatMulNt(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Add { a, b, .. } => vec![*a, *b],
            Op::Scale(x, _) | Op::Relu(x) | Op::Tanh(x) | Op::Sigmoid(x) | Op::Exp(x) | Op::Reshape(x) => {
                vec![*x]
            }
            Op::Softmax { x, .. }
            | Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::SegmentMax { x, .. }
            | Op::SliceCols { x, .. }
            | Op::Gather { x, .. }
            | Op::Dropout { x, .. }
            | Op::Grl { x, .. }
            | Op::SegmentSoftmax { x, .. } => vec![*x],
            Op::Concat { xs, .. } => xs.clone(),
            Op::Conv1d { x, w, .. } => vec![*x, *w],
            Op::SegmentWeightedSum { rows, weights, .. } => vec![*rows, *weights],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

/// One recorded value with the operation that produced it.
#[derive(Clone, Debug)]
pub struct GraphNode {
    pub tensor: Tensor,
    pub op: Op,
    pub grad: Option<Tensor>,
    requires_grad: bool,
}

impl GraphNode {
    pub fn inputs(&self) -> Vec<Var> {
        self.op.inputs()
    }
}

/// Reverse-mode differentiation tape.
///
/// Values are computed eagerly as operations are recorded. Nodes are only
/// ever appended, so recording order is a topological order and
/// [`Tape::backward`] simply walks it in reverse.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<GraphNode>,
    training: bool,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], data: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&data),
        slot @ None => *slot = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape")),
    }
}

fn check_segments(op: &'static str, segments: &[Range<usize>], n: usize) -> Result<()> {
    for s in segments {
        if s.start >= s.end {
            return Err(Error::empty(op, "segment"));
        }
        if s.end > n {
            return Err(Error::invalid(format!(
                "{op}: segment {s:?} out of range for {n} rows"
            )));
        }
    }
    Ok(())
}

impl Tape {
    /// A tape in training mode with finiteness checks enabled.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            training: true,
            checked: true,
        }
    }

    /// A tape in evaluation mode: dropout is the identity.
    pub fn eval() -> Self {
        Tape {
            training: false,
            ..Tape::new()
        }
    }

    pub fn set_checked(&mut self, checked: bool) {
        self.checked = checked;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &GraphNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    /// Gradient of the last `backward` call with respect to `v`, if reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, op: Op, tensor: Tensor) -> Result<Var> {
        if self.checked && !tensor.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Variable | Op::Param(_) | Op::Embed { .. } => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(GraphNode {
            tensor,
            op,
            grad: None,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Constant, t)
    }

    pub fn variable(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Variable, t)
    }

    /// Records a parameter; its gradient flows back into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let v = self.push(Op::Param(id), store.value(id).clone())?;
        self.nodes[v.0].requires_grad = store.is_trainable(id);
        Ok(v)
    }

    /// Records a parameter's current value as a constant (no gradient).
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(Op::Constant, store.value(id).clone())
    }

    /// Cuts the graph: the result has `x`'s value but no history.
    pub fn detach(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).clone();
        self.push(Op::Constant, t)
    }

    /// Looks up rows of an embedding table held in `store`. `oov` must be a
    /// vector with the table's column count.
    pub fn embed(&mut self, store: &ParamStore, table: ParamId, oov: ParamId, rows: Vec<RowRef>) -> Result<Var> {
        let tv = store.value(table);
        let ov = store.value(oov);
        let (n_rows, k) = tv.dims2();
        if ov.len() != k {
            return Err(shape_err("embed", tv, ov));
        }
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in &rows {
            match *r {
                RowRef::Token(i) => {
                    if i >= n_rows {
                        return Err(Error::invalid(format!("embed: row {i} out of range for {n_rows} rows")));
                    }
                    data.extend_from_slice(tv.row(i));
                }
                RowRef::Oov => data.extend_from_slice(ov.data()),
                RowRef::Pad => data.extend(std::iter::repeat(0.0).take(k)),
            }
        }
        let out = Tensor::matrix(rows.len(), k, data)?;
        let trainable = store.is_trainable(table) || store.is_trainable(oov);
        let v = self.push(Op::Embed { table, oov, rows }, out)?;
        self.nodes[v.0].requires_grad = trainable;
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 || ta.rank() > 2 || tb.rank() > 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(ta.data(), tb.data(), &mut out, m, k, n);
        self.push(Op::MatMul(a, b), Tensor::matrix(m, n, out)?)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2();
        let (n, k2) = tb.dims2();
        if k != k2 || ta.rank() > 2 || tb.rank() > 2 {
            return Err(shape_err("matmul_nt", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm_nt(ta.data(), tb.data(), &mut out, m, k, n);
        self.push(Op::MatMulNt(a, b), Tensor::matrix(m, n, out)?)
    }

    /// Elementwise sum. `b` may also be a single row broadcast over every row of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
            let out = Tensor::new(ta.shape().to_vec(), data)?;
            return self.push(Op::Add { a, b, broadcast: false }, out);
        }
        let (rows, cols) = ta.dims2();
        let row_like = tb.rank() == 1 || (tb.rank() == 2 && tb.shape()[0] == 1);
        if ta.rank() == 2 && row_like && tb.len() == cols {
            let mut data = ta.data().to_vec();
            for r in 0..rows {
                for (x, y) in data[r * cols..(r + 1) * cols].iter_mut().zip(tb.data()) {
                    *x += y;
                }
            }
            let out = Tensor::new(ta.shape().to_vec(), data)?;
            return self.push(Op::Add { a, b, broadcast: true }, out);
        }
        Err(shape_err("add", ta, tb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect())?;
        self.push(Op::Scale(x, c), out)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())?;
        self.push(op, out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    /// Softmax along `axis` (0 or 1 for matrices, 0 for vectors).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let groups = axis_groups("softmax", t, axis)?;
        let mut out = t.data().to_vec();
        for (start, stride, len) in groups.iter() {
            softmax_strided(&mut out, start, stride, len);
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push(Op::Softmax { x, axis }, out)
    }

    /// Sum over an axis (kept with extent 1) or over everything (scalar).
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        let out = reduce("sum", self.value(x), axis, false)?;
        self.push(Op::Sum { x, axis }, out)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        let out = reduce("mean", self.value(x), axis, true)?;
        self.push(Op::Mean { x, axis }, out)
    }

    /// Column-wise max over each row segment: `[n x c] -> [segments x c]`.
    /// Ties go to the earliest row.
    pub fn segment_max(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        let t = self.value(x);
        let (n, c) = t.dims2();
        check_segments("segment_max", segments, n)?;
        let mut out = Vec::with_capacity(segments.len() * c);
        let mut argmax = Vec::with_capacity(segments.len() * c);
        for seg in segments {
            for j in 0..c {
                let mut best = seg.start;
                let mut best_v = t.data()[seg.start * c + j];
                for r in seg.start + 1..seg.end {
                    let v = t.data()[r * c + j];
                    if v > best_v {
                        best_v = v;
                        best = r;
                    }
                }
                out.push(best_v);
                argmax.push(best);
            }
        }
        let out = Tensor::matrix(segments.len(), c, out)?;
        self.push(Op::SegmentMax { x, argmax }, out)
    }

    /// Max over the time (row) axis of a `[T x C]` matrix, giving `[1 x C]`.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).rows();
        if n == 0 {
            return Err(Error::empty("max_over_time", "time axis"));
        }
        self.segment_max(x, &[0..n])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::empty("concat", "input list"))?;
        let t0 = self.value(*first);
        let (r0, c0) = t0.dims2();
        match axis {
            0 => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &v in xs {
                    let t = self.value(v);
                    if t.cols() != c0 {
                        return Err(shape_err("concat", t0, t));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                let out = Tensor::matrix(rows, c0, data)?;
                self.push(Op::Concat { xs: xs.to_vec(), axis }, out)
            }
            1 => {
                let mut cols = 0;
                for &v in xs {
                    let t = self.value(v);
                    if t.rows() != r0 {
                        return Err(shape_err("concat", t0, t));
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for &v in xs {
                        data.extend_from_slice(self.value(v).row(r));
                    }
                }
                let out = Tensor::matrix(r0, cols, data)?;
                self.push(Op::Concat { xs: xs.to_vec(), axis }, out)
            }
            _ => Err(Error::invalid(format!("concat: axis {axis} out of range"))),
        }
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if start + len > c {
            return Err(Error::invalid(format!(
                "slice_cols: {start}..{} out of range for {c} columns",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let out = Tensor::matrix(r, len, data)?;
        self.push(Op::SliceCols { x, start }, out)
    }

    /// Selects rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, rows: Vec<Option<usize>>) -> Result<Var> {
        let t = self.value(x);
        let (n, c) = t.dims2();
        let mut data = Vec::with_capacity(rows.len() * c);
        for r in &rows {
            match *r {
                Some(i) if i < n => data.extend_from_slice(t.row(i)),
                Some(i) => {
                    return Err(Error::invalid(format!("gather_rows: row {i} out of range for {n} rows")))
                }
                None => data.extend(std::iter::repeat(0.0).take(c)),
            }
        }
        let out = Tensor::matrix(rows.len(), c, data)?;
        self.push(Op::Gather { x, rows }, out)
    }

    /// Inverted dropout with drop probability `p`; the identity in evaluation mode.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {p}")));
        }
        if !self.training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(Op::Dropout { x, mask }, out)
    }

    /// Gradient reversal: identity forward, `-lambda * upstream` backward.
    pub fn grl(&mut self, x: Var, cfg: GrlConfig) -> Result<Var> {
        let out = self.value(x).clone();
        self.push(Op::Grl { x, lambda: cfg.lambda }, out)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push(Op::Reshape(x), out)
    }

    /// Valid 1-D convolution over time for a stack of equally long sequences.
    ///
    /// `x` is `[(B * seg_len) x K]`, `w` is `[(width * K) x C]`; the result is
    /// `[(B * (seg_len - width + 1)) x C]`. Window `t` of a sequence covers its
    /// rows `t..t + width`, flattened row-major.
    pub fn conv1d(&mut self, x: Var, w: Var, width: usize, seg_len: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (n, k) = tx.dims2();
        let (wk, c) = tw.dims2();
        if width == 0 || wk != width * k {
            return Err(shape_err("conv1d", tx, tw));
        }
        if seg_len < width {
            return Err(Error::invalid(format!(
                "conv1d: sequence length {seg_len} shorter than filter width {width}"
            )));
        }
        if n % seg_len != 0 {
            return Err(Error::invalid(format!("conv1d: {n} rows is not a multiple of {seg_len}")));
        }
        let batch = n / seg_len;
        let steps = seg_len - width + 1;
        let mut out = vec![0.0; batch * steps * c];
        for b in 0..batch {
            for t in 0..steps {
                let start = (b * seg_len + t) * k;
                let window = &tx.data()[start..start + width * k];
                let orow = (b * steps + t) * c;
                kernels::gemm(window, tw.data(), &mut out[orow..orow + c], 1, width * k, c);
            }
        }
        let out = Tensor::matrix(batch * steps, c, out)?;
        self.push(Op::Conv1d { x, w, width, seg_len }, out)
    }

    /// Softmax within each row segment of a column vector `[n x 1]` (or `[n]`).
    pub fn segment_softmax(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        let t = self.value(x);
        if t.cols() != 1 && t.rank() != 1 {
            return Err(Error::invalid(format!(
                "segment_softmax expects a column vector, got {:?}",
                t.shape()
            )));
        }
        check_segments("segment_softmax", segments, t.len())?;
        let mut out = t.data().to_vec();
        for s in segments {
            softmax_strided(&mut out, s.start, 1, s.len());
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push(
            Op::SegmentSoftmax {
                x,
                segments: segments.to_vec(),
            },
            out,
        )
    }

    /// `out[s] = sum_{i in segment s} weights[i] * rows[i]`.
    pub fn segment_weighted_sum(&mut self, rows: Var, weights: Var, segments: &[Range<usize>]) -> Result<Var> {
        let (tr, tw) = (self.value(rows), self.value(weights));
        let (n, h) = tr.dims2();
        if tw.len() != n {
            return Err(shape_err("segment_weighted_sum", tr, tw));
        }
        check_segments("segment_weighted_sum", segments, n)?;
        let mut out = vec![0.0; segments.len() * h];
        for (s, seg) in segments.iter().enumerate() {
            let orow = &mut out[s * h..(s + 1) * h];
            for i in seg.clone() {
                let w = tw.data()[i];
                for (o, v) in orow.iter_mut().zip(tr.row(i)) {
                    *o += w * v;
                }
            }
        }
        let out = Tensor::matrix(segments.len(), h, out)?;
        self.push(
            Op::SegmentWeightedSum {
                rows,
                weights,
                segments: segments.to_vec(),
            },
            out,
        )
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    /// `logits` is `[B x C]`, or `[C]` for a single example.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (b, c) = t.dims2();
        if labels.len() != b {
            return Err(Error::invalid(format!(
                "cross_entropy: {} labels for {} rows of logits",
                labels.len(),
                b
            )));
        }
        if b == 0 || c == 0 {
            return Err(Error::empty("cross_entropy", "logits"));
        }
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::invalid(format!(
                    "cross_entropy: label {y} out of range for {c} classes"
                )));
            }
            let row = t.row(r);
            let (arg, m) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != arg)
                .map(|(_, v)| (v - m).exp())
                .sum();
            loss += rest.ln_1p() + (m - row[y]);
            softmax_strided(&mut probs, r * c, 1, c);
        }
        let out = Tensor::scalar(loss / b as f64);
        self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            out,
        )
    }

    /// Back-propagates from a one-element `loss`, accumulating gradients into
    /// the trainable parameters of `store`. Node gradients of earlier calls are
    /// replaced; store gradients are added to and never cleared here.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads, store);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = g;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>], store: &mut ParamStore) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Constant | Op::Variable => {}
            Op::Param(id) => store.accumulate(*id, gd),
            Op::Embed { table, oov, rows } => {
                let k = node.tensor.cols();
                let mut oov_grad = vec![0.0; k];
                let mut any_oov = false;
                for (r, row) in rows.iter().enumerate() {
                    let gr = &gd[r * k..(r + 1) * k];
                    match *row {
                        RowRef::Token(t) => store.accumulate_row(*table, t, gr),
                        RowRef::Oov => {
                            any_oov = true;
                            for (o, v) in oov_grad.iter_mut().zip(gr) {
                                *o += v;
                            }
                        }
                        RowRef::Pad => {}
                    }
                }
                if any_oov {
                    store.accumulate(*oov, &oov_grad);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.cols();
                if self.needs(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm_nt(gd, tb.data(), &mut ga, m, n, k);
                    accumulate(grads, *a, ta.shape(), ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm_tn(ta.data(), gd, &mut gb, m, k, n);
                    accumulate(grads, *b, tb.shape(), gb);
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.rows();
                if self.needs(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(gd, tb.data(), &mut ga, m, n, k);
                    accumulate(grads, *a, ta.shape(), ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; n * k];
                    kernels::gemm_tn(gd, ta.data(), &mut gb, m, n, k);
                    accumulate(grads, *b, tb.shape(), gb);
                }
            }
            Op::Add { a, b, broadcast } => {
                if self.needs(*a) {
                    accumulate(grads, *a, self.value(*a).shape(), gd.to_vec());
                }
                if self.needs(*b) {
                    let tb = self.value(*b);
                    if *broadcast {
                        let c = tb.len();
                        let mut gb = vec![0.0; c];
                        for row in gd.chunks(c) {
                            for (o, v) in gb.iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                        accumulate(grads, *b, tb.shape(), gb);
                    } else {
                        accumulate(grads, *b, tb.shape(), gd.to_vec());
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, self.value(*a).shape(), gd.to_vec());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, self.value(*b).shape(), gd.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let ga = gd.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    accumulate(grads, *a, ta.shape(), ga);
                }
                if self.needs(*b) {
                    let gb = gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    accumulate(grads, *b, tb.shape(), gb);
                }
            }
            Op::Scale(x, c) => {
                accumulate(grads, *x, self.value(*x).shape(), gd.iter().map(|v| v * c).collect());
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let gx = gd
                    .iter()
                    .zip(tx.data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::Tanh(x) => {
                let y = node.tensor.data();
                let gx = gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::Sigmoid(x) => {
                let y = node.tensor.data();
                let gx = gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::Exp(x) => {
                let y = node.tensor.data();
                let gx = gd.iter().zip(y).map(|(g, y)| g * y).collect();
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::Softmax { x, axis } => {
                let tx = self.value(*x);
                let y = node.tensor.data();
                let mut gx = vec![0.0; y.len()];
                for (start, stride, len) in axis_groups("softmax", tx, *axis).expect("validated in forward").iter() {
                    let idx = |t: usize| start + t * stride;
                    let dot: f64 = (0..len).map(|t| gd[idx(t)] * y[idx(t)]).sum();
                    for t in 0..len {
                        gx[idx(t)] = y[idx(t)] * (gd[idx(t)] - dot);
                    }
                }
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let tx = self.value(*x);
                let (r, c) = tx.dims2();
                let mean = matches!(node.op, Op::Mean { .. });
                let mut gx = vec![0.0; tx.len()];
                match axis {
                    None => {
                        let s = if mean { gd[0] / tx.len() as f64 } else { gd[0] };
                        gx.iter_mut().for_each(|v| *v = s);
                    }
                    Some(a) if tx.rank() == 1 || *a == 1 => {
                        let d = if mean { c as f64 } else { 1.0 };
                        for i in 0..r {
                            for j in 0..c {
                                gx[i * c + j] = gd[i] / d;
                            }
                        }
                    }
                    Some(_) => {
                        let d = if mean { r as f64 } else { 1.0 };
                        for i in 0..r {
                            for j in 0..c {
                                gx[i * c + j] = gd[j] / d;
                            }
                        }
                    }
                }
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::SegmentMax { x, argmax } => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut gx = vec![0.0; tx.len()];
                for (o, &r) in argmax.iter().enumerate() {
                    gx[r * c + o % c] += gd[o];
                }
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::Concat { xs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &v in xs {
                        let t = self.value(v);
                        if self.needs(v) {
                            accumulate(grads, v, t.shape(), gd[offset..offset + t.len()].to_vec());
                        }
                        offset += t.len();
                    }
                } else {
                    let total = node.tensor.cols();
                    let rows = node.tensor.rows();
                    let mut col = 0;
                    for &v in xs {
                        let t = self.value(v);
                        let c = t.cols();
                        if self.needs(v) {
                            let mut gv = Vec::with_capacity(t.len());
                            for r in 0..rows {
                                gv.extend_from_slice(&gd[r * total + col..r * total + col + c]);
                            }
                            accumulate(grads, v, t.shape(), gv);
                        }
                        col += c;
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let (r, c) = tx.dims2();
                let len = node.tensor.cols();
                let mut gx = vec![0.0; tx.len()];
                for i in 0..r {
                    gx[i * c + start..i * c + start + len].copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::Gather { x, rows } => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut gx = vec![0.0; tx.len()];
                for (o, r) in rows.iter().enumerate() {
                    if let Some(r) = r {
                        for (a, b) in gx[r * c..(r + 1) * c].iter_mut().zip(&gd[o * c..(o + 1) * c]) {
                            *a += b;
                        }
                    }
                }
                accumulate(grads, *x, tx.shape(), gx);
            }
            Op::Dropout { x, mask } => {
                let gx = gd.iter().zip(mask).map(|(g, m)| g * m).collect();
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::Grl { x, lambda } => {
                let gx = gd.iter().map(|g| -lambda * g).collect();
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, self.value(*x).shape(), gd.to_vec());
            }
            Op::Conv1d { x, w, width, seg_len } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let k = tx.cols();
                let c = tw.cols();
                let batch = tx.rows() / seg_len;
                let steps = seg_len - width + 1;
                let wk = width * k;
                let need_x = self.needs(*x);
                let need_w = self.needs(*w);
                let mut gx = vec![0.0; if need_x { tx.len() } else { 0 }];
                let mut gw = vec![0.0; if need_w { tw.len() } else { 0 }];
                for b in 0..batch {
                    for t in 0..steps {
                        let start = (b * seg_len + t) * k;
                        let grow = &gd[(b * steps + t) * c..(b * steps + t + 1) * c];
                        if need_w {
                            let window = &tx.data()[start..start + wk];
                            kernels::gemm_tn(window, grow, &mut gw, 1, wk, c);
                        }
                        if need_x {
                            kernels::gemm_nt(grow, tw.data(), &mut gx[start..start + wk], 1, c, wk);
                        }
                    }
                }
                if need_x {
                    accumulate(grads, *x, tx.shape(), gx);
                }
                if need_w {
                    accumulate(grads, *w, tw.shape(), gw);
                }
            }
            Op::SegmentSoftmax { x, segments } => {
                let y = node.tensor.data();
                let mut gx = vec![0.0; y.len()];
                for s in segments {
                    let dot: f64 = s.clone().map(|t| gd[t] * y[t]).sum();
                    for t in s.clone() {
                        gx[t] = y[t] * (gd[t] - dot);
                    }
                }
                accumulate(grads, *x, self.value(*x).shape(), gx);
            }
            Op::SegmentWeightedSum { rows, weights, segments } => {
                let (tr, tw) = (self.value(*rows), self.value(*weights));
                let h = tr.cols();
                if self.needs(*rows) {
                    let mut gr = vec![0.0; tr.len()];
                    for (s, seg) in segments.iter().enumerate() {
                        let grow = &gd[s * h..(s + 1) * h];
                        for i in seg.clone() {
                            let w = tw.data()[i];
                            for (o, g) in gr[i * h..(i + 1) * h].iter_mut().zip(grow) {
                                *o += w * g;
                            }
                        }
                    }
                    accumulate(grads, *rows, tr.shape(), gr);
                }
                if self.needs(*weights) {
                    let mut gw = vec![0.0; tw.len()];
                    for (s, seg) in segments.iter().enumerate() {
                        let grow = &gd[s * h..(s + 1) * h];
                        for i in seg.clone() {
                            gw[i] += kernels::dot(tr.row(i), grow);
                        }
                    }
                    accumulate(grads, *weights, tw.shape(), gw);
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let tl = self.value(*logits);
                let c = tl.cols();
                let b = labels.len() as f64;
                let mut gx = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    gx[r * c + y] -= 1.0;
                }
                gx.iter_mut().for_each(|v| *v *= gd[0] / b);
                accumulate(grads, *logits, tl.shape(), gx);
            }
        }
    }

    /// Text adjacency list of the graph, one node per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let inputs: Vec<String> = n.inputs().iter().map(|v| format!("%{}", v.0)).collect();
            let _ = write!(s, "%{} = {}({}) shape={:?}", i, n.op.name(), inputs.join(", "), n.tensor.shape());
            if let Op::Param(id) = n.op {
                let _ = write!(s, " param={id}");
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_strided(data: &mut [f64], start: usize, stride: usize, len: usize) {
    let idx = |t: usize| start + t * stride;
    let m = (0..len).map(|t| data[idx(t)]).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for t in 0..len {
        let e = (data[idx(t)] - m).exp();
        data[idx(t)] = e;
        z += e;
    }
    for t in 0..len {
        data[idx(t)] /= z;
    }
}

/// Iteration groups `(start, stride, len)` for a reduction along `axis`.
struct AxisGroups {
    starts: Vec<usize>,
    stride: usize,
    len: usize,
}

impl AxisGroups {
    fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.starts.iter().map(move |&s| (s, self.stride, self.len))
    }
}

fn axis_groups(op: &'static str, t: &Tensor, axis: usize) -> Result<AxisGroups> {
    let groups = match (t.rank(), axis) {
        (0 | 1, 0) => AxisGroups {
            starts: vec![0],
            stride: 1,
            len: t.len(),
        },
        (2, 1) => AxisGroups {
            starts: (0..t.rows()).map(|r| r * t.cols()).collect(),
            stride: 1,
            len: t.cols(),
        },
        (2, 0) => AxisGroups {
            starts: (0..t.cols()).collect(),
            stride: t.cols(),
            len: t.rows(),
        },
        _ => {
            return Err(Error::invalid(format!(
                "{op}: axis {axis} invalid for shape {:?}",
                t.shape()
            )))
        }
    };
    if groups.len == 0 {
        return Err(Error::empty(op, format!("axis {axis}")));
    }
    Ok(groups)
}

fn reduce(op: &'static str, t: &Tensor, axis: Option<usize>, mean: bool) -> Result<Tensor> {
    let Some(axis) = axis else {
        if mean && t.is_empty() {
            return Err(Error::empty(op, "tensor"));
        }
        let s: f64 = t.data().iter().sum();
        return Ok(Tensor::scalar(if mean { s / t.len() as f64 } else { s }));
    };
    let groups = axis_groups(op, t, axis)?;
    let out: Vec<f64> = groups
        .iter()
        .map(|(start, stride, len)| {
            let s: f64 = (0..len).map(|i| t.data()[start + i * stride]).sum();
            if mean {
                s / len as f64
            } else {
                s
            }
        })
        .collect();
    let shape = match (t.rank(), axis) {
        (0 | 1, _) => vec![1],
        (_, 0) => vec![1, t.cols()],
        _ => vec![t.rows(), 1],
    };
    Tensor::new(shape, out)
}
