//! Define-by-run reverse-mode differentiation over [`TensorGrid`] values.
//!
//! A [`Tape`] records every primitive as it is applied. Calling
//! [`Tape::backward`] on a scalar node walks the records in reverse and
//! accumulates `d output / d node` into each node's gradient. The graph is
//! append-only, so it is acyclic by construction: a node can only refer to
//! nodes recorded before it.
//!
//! The primitive set is exactly what the classifier needs: dilated causal
//! convolution, matrix product, transpose, addition, `tanh`/`relu`/`sigmoid`,
//! row softmax, column concatenation and extraction, summation, and a
//! numerically stable binary cross-entropy on a logit.

use crate::error::{Error, Result};
use crate::grid::TensorGrid;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Entrywise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the forward output `y = f(x)` and input `x`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies `op` to every entry of `g`.
pub fn elementwise(op: Activation, g: &TensorGrid) -> TensorGrid {
    g.map(|v| op.apply(v))
}

/// Max-shifted softmax of a vector.
pub fn softmax_rowvec(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Dilated causal 1-D convolution.
///
/// `input` is `C_in x T`, `kernel` is `C_out x (C_in * taps)` with tap `k`
/// of input channel `c` stored at column `c * taps + k`, and `bias` is
/// `C_out x 1`. Tap `k` reads the input at `t - k * dilation`; positions
/// before the series start read as zero, which is the same as left padding
/// of length `(taps - 1) * dilation`. Output is `C_out x T`.
pub fn dilated_causal_conv(
    input: &TensorGrid,
    kernel: &TensorGrid,
    bias: &TensorGrid,
    dilation: usize,
    taps: usize,
) -> Result<TensorGrid> {
    check_conv_shapes(input, kernel, bias, dilation, taps)?;
    let (c_in, t_len) = input.shape();
    let c_out = kernel.rows();
    let mut out = TensorGrid::zeros(c_out, t_len);
    for o in 0..c_out {
        let b = bias.get(o, 0);
        let row = out.row_mut(o);
        row.fill(b);
        for c in 0..c_in {
            let x = input.row(c);
            for k in 0..taps {
                let w = kernel.get(o, c * taps + k);
                let shift = k * dilation;
                if shift >= t_len || w == 0.0 {
                    continue;
                }
                axpy(&mut row[shift..], w, &x[..t_len - shift]);
            }
        }
    }
    Ok(out)
}

fn check_conv_shapes(
    input: &TensorGrid,
    kernel: &TensorGrid,
    bias: &TensorGrid,
    dilation: usize,
    taps: usize,
) -> Result<()> {
    if dilation == 0 || taps == 0 {
        return Err(Error::Config(format!("dilation ({dilation}) and kernel size ({taps}) must be >= 1")));
    }
    if kernel.cols() != input.rows() * taps {
        return Err(Error::Config(format!(
            "kernel has {} columns but input has {} channels x {} taps",
            kernel.cols(),
            input.rows(),
            taps
        )));
    }
    if bias.shape() != (kernel.rows(), 1) {
        return Err(Error::Config(format!(
            "bias shape {:?} does not match {} output channels",
            bias.shape(),
            kernel.rows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { input: Var, kernel: Var, bias: Var, dilation: usize, taps: usize },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Unary(Activation, Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    Column(Var, usize),
    Sum(Var),
    BceWithLogits { logit: Var, target: f64 },
}

#[derive(Debug)]
struct Node {
    value: TensorGrid,
    grad: TensorGrid,
    op: Op,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: TensorGrid, op: Op) -> Var {
        let grad = TensorGrid::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: TensorGrid) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &TensorGrid {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &TensorGrid {
        &self.nodes[v.0].grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    pub fn conv(&mut self, input: Var, kernel: Var, bias: Var, dilation: usize, taps: usize) -> Result<Var> {
        let value = dilated_causal_conv(self.value(input), self.value(kernel), self.value(bias), dilation, taps)?;
        Ok(self.push(value, Op::Conv { input, kernel, bias, dilation, taps }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Config(format!("add shape mismatch: {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let mut value = va.clone();
        value.add_assign(vb);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn unary(&mut self, op: Activation, a: Var) -> Var {
        let value = elementwise(op, self.value(a));
        self.push(value, Op::Unary(op, a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Activation::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Activation::Sigmoid, a)
    }

    /// Softmax applied independently to every row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = TensorGrid::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let s = softmax_rowvec(src.row(r));
            value.row_mut(r).copy_from_slice(&s);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Places column vectors (or matrices with equal row count) side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Usage("concat of zero grids".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(Error::Config(format!("concat row mismatch: {} vs {}", v.rows(), rows)));
            }
            cols += v.cols();
        }
        let mut value = TensorGrid::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let v = self.value(*p);
            for r in 0..rows {
                for c in 0..v.cols() {
                    value.set(r, offset + c, v.get(r, c));
                }
            }
            offset += v.cols();
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Extracts column `index` as an `R x 1` grid.
    pub fn column(&mut self, a: Var, index: usize) -> Result<Var> {
        let src = self.value(a);
        if index >= src.cols() {
            return Err(Error::Usage(format!("column {index} out of range for {} columns", src.cols())));
        }
        let value = TensorGrid::column_vector(&src.column(index));
        Ok(self.push(value, Op::Column(a, index)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).as_slice().iter().sum();
        self.push(TensorGrid::scalar(total), Op::Sum(a))
    }

    /// `-[y ln sigmoid(z) + (1 - y) ln(1 - sigmoid(z))]` evaluated without
    /// forming the probability, so it stays finite for large `|z|`.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        let v = self.value(logit);
        if v.shape() != (1, 1) {
            return Err(Error::Usage(format!("loss expects a scalar logit, got {:?}", v.shape())));
        }
        let z = v.item();
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        Ok(self.push(TensorGrid::scalar(loss), Op::BceWithLogits { logit, target }))
    }

    /// Accumulates `d output / d node` into every node's gradient.
    ///
    /// Gradients add onto whatever is already stored, so call
    /// [`Tape::zero_grad`] first when re-running on the same tape.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        self.nodes[output.0].grad.as_mut_slice()[0] += 1.0;
        for idx in (0..=output.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let g = self.nodes[idx].grad.clone();
            if g.as_slice().iter().all(|&v| v == 0.0) {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: &TensorGrid) {
        self.nodes[v.0].grad.add_assign(contribution);
    }

    fn propagate(&mut self, idx: usize, op: &Op, g: &TensorGrid) {
        match *op {
            Op::Leaf => {}
            Op::Conv { input, kernel, bias, dilation, taps } => {
                let (gi, gk, gb) = conv_backward(self.value(input), self.value(kernel), g, dilation, taps);
                self.accumulate(input, &gi);
                self.accumulate(kernel, &gk);
                self.accumulate(bias, &gb);
            }
            Op::MatMul(a, b) => {
                // dA = G B^T, dB = A^T G
                let ga = g.matmul(&self.value(b).transpose()).expect("matmul shapes recorded");
                let gb = self.value(a).transpose().matmul(g).expect("matmul shapes recorded");
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Transpose(a) => {
                let ga = g.transpose();
                self.accumulate(a, &ga);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Unary(act, a) => {
                let x = self.value(a);
                let y = &self.nodes[idx].value;
                let mut ga = TensorGrid::zeros(x.rows(), x.cols());
                for (((o, &xv), &yv), &gv) in
                    ga.as_mut_slice().iter_mut().zip(x.as_slice()).zip(y.as_slice()).zip(g.as_slice())
                {
                    *o = gv * act.derivative(xv, yv);
                }
                self.accumulate(a, &ga);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = TensorGrid::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::ConcatCols(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    let mut gp = TensorGrid::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gp.set(r, c, g.get(r, offset + c));
                        }
                    }
                    offset += cols;
                    self.accumulate(p, &gp);
                }
            }
            Op::Column(a, index) => {
                let (rows, cols) = self.value(a).shape();
                let mut ga = TensorGrid::zeros(rows, cols);
                for r in 0..rows {
                    ga.set(r, index, g.get(r, 0));
                }
                self.accumulate(a, &ga);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(a).shape();
                let ga = TensorGrid::filled(rows, cols, g.item());
                self.accumulate(a, &ga);
            }
            Op::BceWithLogits { logit, target } => {
                let z = self.value(logit).item();
                let ga = TensorGrid::scalar(g.item() * (sigmoid(z) - target));
                self.accumulate(logit, &ga);
            }
        }
    }
}

/// Gradients of the convolution with respect to input, kernel and bias.
const LANES: usize = 16;

/// Dot product over independent accumulators so the loop vectorises and
/// does not wait on a single add chain.
#[inline(always)]
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] += acc[i + width];
        }
    }
    acc[0] + tail
}

#[inline(always)]
fn axpy_lanes(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

// Wider registers only; no fused multiply-add, so results are bit-identical
// to the portable path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> f64 {
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_avx2(y: &mut [f64], a: f64, x: &[f64]) {
    axpy_lanes(y, a, x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { dot_avx2(a, b) };
    }
    dot_lanes(a, b)
}

/// `y += a * x` over the common length.
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports the enabled feature.
        return unsafe { axpy_avx2(y, a, x) };
    }
    axpy_lanes(y, a, x)
}

fn conv_backward(
    input: &TensorGrid,
    kernel: &TensorGrid,
    g: &TensorGrid,
    dilation: usize,
    taps: usize,
) -> (TensorGrid, TensorGrid, TensorGrid) {
    let (c_in, t_len) = input.shape();
    let c_out = kernel.rows();
    let mut gi = TensorGrid::zeros(c_in, t_len);
    let mut gk = TensorGrid::zeros(c_out, c_in * taps);
    let mut gb = TensorGrid::zeros(c_out, 1);
    for o in 0..c_out {
        let go = g.row(o);
        gb.set(o, 0, go.iter().sum());
        for c in 0..c_in {
            let x = input.row(c);
            for k in 0..taps {
                let shift = k * dilation;
                if shift >= t_len {
                    continue;
                }
                let n = t_len - shift;
                let dot = dot(&go[shift..], &x[..n]);
                gk.set(o, c * taps + k, dot);
                let w = kernel.get(o, c * taps + k);
                if w != 0.0 {
                    axpy(&mut gi.row_mut(c)[..n], w, &go[shift..]);
                }
            }
        }
    }
    (gi, gk, gb)
}
