//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass as a
//! node holding its output value. [`Graph::backward`] then walks the tape in
//! reverse and returns the gradient of a scalar with respect to every node
//! that depends on a leaf marked `requires_grad`.
//!
//! Operations are coarse (a whole batched convolution is one node) so tapes
//! stay short and the heavy loops go through `dgemm`.

use std::ops::Range;

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Normalization statistics source for [`Graph::batch_norm`].
#[derive(Debug, Clone, Copy)]
pub enum NormStats<'a> {
    /// Normalize with the statistics of the current batch.
    Batch { epsilon: f64 },
    /// Normalize with stored statistics.
    Running {
        mean: &'a [f64],
        var: &'a [f64],
        epsilon: f64,
    },
}

/// Per-channel moments observed on a training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Reshape(Var),
    CropTime {
        x: Var,
        offset: usize,
    },
    MeanLast(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Var, Var),
    Step {
        x: Var,
        t: usize,
    },
    Stack(Vec<Var>),
    Gather {
        x: Var,
        segments: Vec<Range<usize>>,
    },
    PairwiseScores {
        p: Var,
        q: Var,
        bias: Var,
        v: Var,
    },
    SoftmaxLast(Var),
    Bmm(Var, Var),
    MeanAxis1(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(msg: impl Into<String>) -> Error {
    Error::InvalidShape(msg.into())
}

/// `c = op(a) * op(b) + beta * c` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the length assertion above bounds every index the strides can
    // reach, and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(&delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, shape: &[usize], data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        let requires_grad = inputs.iter().any(|v| self.needs(*v));
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Gradients are tracked iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        let mut value = tensor;
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Valid (unpadded) stride-1 convolution over `[batch, c_in, length]`
    /// with weights `[c_out, c_in, kernel]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
            return Err(shape_err(format!(
                "conv1d input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if dilation == 0 {
            return Err(shape_err("dilation must be positive"));
        }
        let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, kernel) = (ws[0], ws[2]);
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(shape_err("conv1d bias must have one entry per output channel"));
            }
        }
        let span = (kernel - 1) * dilation + 1;
        if len < span {
            return Err(Error::SequenceTooShort {
                length: len,
                required: span,
            });
        }
        let out_len = len - span + 1;
        let rows = c_in * kernel;
        let mut out = vec![0.0; batch * c_out * out_len];
        let mut col = vec![0.0; rows * out_len];
        let xd = self.data(x);
        let wd = self.data(w);
        for bi in 0..batch {
            im2col(&xd[bi * c_in * len..(bi + 1) * c_in * len], c_in, len, kernel, dilation, out_len, &mut col);
            let o = &mut out[bi * c_out * out_len..(bi + 1) * c_out * out_len];
            gemm(c_out, rows, out_len, wd, false, &col, false, o, 0.0);
            if let Some(b) = b {
                let bd = self.data(b);
                for (co, chunk) in o.chunks_mut(out_len).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bd[co]);
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            &[batch, c_out, out_len],
            out,
            Op::Conv1d { x, w, b, dilation },
            &inputs,
        )
    }

    /// Per-channel normalization of `[batch, channels, length]`. In batch
    /// mode the observed moments are returned for running-stat updates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<'_>,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape_err(format!("batch_norm expects 3-D input, got {xs:?}")));
        }
        let (batch, ch, len) = (xs[0], xs[1], xs[2]);
        if self.shape(gamma) != [ch] || self.shape(beta) != [ch] {
            return Err(shape_err("batch_norm scale/shift must have one entry per channel"));
        }
        let xd = self.data(x);
        let gd = self.data(gamma);
        let bd = self.data(beta);
        let count = batch * len;
        let (mean, var, epsilon, training) = match stats {
            NormStats::Batch { epsilon } => {
                if count < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "normalization group of {count} element(s) per channel"
                    )));
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let mut s = 0.0;
                    for bi in 0..batch {
                        let off = (bi * ch + c) * len;
                        s += xd[off..off + len].iter().sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut ss = 0.0;
                    for bi in 0..batch {
                        let off = (bi * ch + c) * len;
                        ss += xd[off..off + len].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = ss / count as f64;
                }
                (mean, var, epsilon, true)
            }
            NormStats::Running { mean, var, epsilon } => {
                if mean.len() != ch || var.len() != ch {
                    return Err(shape_err("running statistics do not match channel count"));
                }
                (mean.to_vec(), var.to_vec(), epsilon, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for bi in 0..batch {
            for c in 0..ch {
                let off = (bi * ch + c) * len;
                for t in off..off + len {
                    let h = (xd[t] - mean[c]) * inv_std[c];
                    xhat[t] = h;
                    out[t] = gd[c] * h + bd[c];
                }
            }
        }
        let moments = training.then(|| BatchMoments { mean, var });
        let var_out = self.push(
            &xs,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            &[x, gamma, beta],
        )?;
        Ok((var_out, moments))
    }

    /// For every leaky-ReLU input element, in recording order, whether it
    /// lies strictly above zero.
    pub(crate) fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu { x, .. } = node.op {
                out.extend(self.data(x).iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// `max(x, slope * x)` with derivative `slope` at zero.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let out = self
            .data(x)
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.push(&shape, out, Op::LeakyRelu { x, slope }, &[x])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "add")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        self.push(&shape, out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "mul")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        self.push(&shape, out, Op::Mul(a, b), &[a, b])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(&shape, out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|v| v.tanh()).collect();
        self.push(&shape, out, Op::Tanh(x), &[x])
    }

    /// `x W^T + b` for `x: [rows, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err(format!("linear input {xs:?} vs weight {ws:?}")));
        }
        let (rows, inp, outp) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [outp] {
                return Err(shape_err(format!(
                    "linear bias {:?} for {outp} outputs",
                    self.shape(b)
                )));
            }
        }
        let mut out = vec![0.0; rows * outp];
        gemm(rows, inp, outp, self.data(x), false, self.data(w), true, &mut out, 0.0);
        if let Some(b) = b {
            let bd = self.data(b);
            for row in out.chunks_mut(outp) {
                row.iter_mut().zip(bd).for_each(|(o, b)| *o += b);
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(&[rows, outp], out, Op::Linear { x, w, b }, &inputs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.data(x).to_vec();
        self.push(shape, data, Op::Reshape(x), &[x])
    }

    /// Keeps `len` samples of the time axis of `[batch, channels, length]`
    /// starting at `offset`.
    pub fn crop_time(&mut self, x: Var, offset: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || offset + len > xs[2] || len == 0 {
            return Err(shape_err(format!("crop {offset}+{len} of {xs:?}")));
        }
        let full = xs[2];
        let xd = self.data(x);
        let out = xd
            .chunks(full)
            .flat_map(|row| row[offset..offset + len].iter().copied())
            .collect();
        self.push(&[xs[0], xs[1], len], out, Op::CropTime { x, offset }, &[x])
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(shape_err("mean_last needs at least two axes"));
        }
        let len = xs[xs.len() - 1];
        let out = self
            .data(x)
            .chunks(len)
            .map(|c| c.iter().sum::<f64>() / len as f64)
            .collect();
        self.push(&xs[..xs.len() - 1], out, Op::MeanLast(x), &[x])
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || start + len > xs[1] || len == 0 {
            return Err(shape_err(format!("slice {start}+{len} of {xs:?}")));
        }
        let out = self
            .data(x)
            .chunks(xs[1])
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        self.push(&[xs[0], len], out, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err(format!("concat {sa:?} with {sb:?}")));
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(ad.len() + bd.len());
        for (ra, rb) in ad.chunks(sa[1]).zip(bd.chunks(sb[1])) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        self.push(&[sa[0], sa[1] + sb[1]], out, Op::ConcatCols(a, b), &[a, b])
    }

    /// Step `t` of `[batch, steps, features]` as `[batch, features]`.
    pub fn step(&mut self, x: Var, t: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || t >= xs[1] {
            return Err(shape_err(format!("step {t} of {xs:?}")));
        }
        let (steps, feat) = (xs[1], xs[2]);
        let out = self
            .data(x)
            .chunks(steps * feat)
            .flat_map(|b| b[t * feat..(t + 1) * feat].iter().copied())
            .collect();
        self.push(&[xs[0], feat], out, Op::Step { x, t }, &[x])
    }

    /// Stacks `[batch, features]` parts into `[batch, parts, features]`.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("stack of zero parts"))?;
        let fs = self.shape(*first).to_vec();
        if fs.len() != 2 || parts.iter().any(|p| self.shape(*p) != fs.as_slice()) {
            return Err(shape_err("stack parts must share a 2-D shape"));
        }
        let (batch, feat) = (fs[0], fs[1]);
        let steps = parts.len();
        let mut out = vec![0.0; batch * steps * feat];
        for (t, p) in parts.iter().enumerate() {
            for (b, row) in self.data(*p).chunks(feat).enumerate() {
                let off = (b * steps + t) * feat;
                out[off..off + feat].copy_from_slice(row);
            }
        }
        self.push(&[batch, steps, feat], out, Op::Stack(parts.to_vec()), parts)
    }

    /// Gathers equal-length step windows of `[batch, steps, features]` into
    /// `[batch * windows, window_len, features]`, window-minor.
    pub fn gather_windows(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let seg_len = segments.first().map_or(0, |s| s.len());
        if xs.len() != 3
            || seg_len == 0
            || segments.iter().any(|s| s.len() != seg_len || s.end > xs[1])
        {
            return Err(shape_err(format!("windows {segments:?} of {xs:?}")));
        }
        let (batch, steps, feat) = (xs[0], xs[1], xs[2]);
        let xd = self.data(x);
        let mut out = Vec::with_capacity(batch * segments.len() * seg_len * feat);
        for b in 0..batch {
            for s in segments {
                let lo = (b * steps + s.start) * feat;
                out.extend_from_slice(&xd[lo..lo + seg_len * feat]);
            }
        }
        self.push(
            &[batch * segments.len(), seg_len, feat],
            out,
            Op::Gather {
                x,
                segments: segments.to_vec(),
            },
            &[x],
        )
    }

    /// Additive pairwise scores `s[b,i,j] = v . tanh(p[b,i] + q[b,j] + bias)`
    /// for `p: [batch, n, a]`, `q: [batch, m, a]`.
    pub fn pairwise_scores(&mut self, p: Var, q: Var, bias: Var, v: Var) -> Result<Var> {
        let ps = self.shape(p).to_vec();
        let qs = self.shape(q).to_vec();
        if ps.len() != 3 || qs.len() != 3 || ps[0] != qs[0] || ps[2] != qs[2] {
            return Err(shape_err(format!("pairwise scores {ps:?} vs {qs:?}")));
        }
        let a = ps[2];
        if self.shape(bias) != [a] || self.shape(v) != [a] {
            return Err(shape_err("score bias and vector must match the attention width"));
        }
        let (batch, n, m) = (ps[0], ps[1], qs[1]);
        let (pd, qd, bd, vd) = (self.data(p), self.data(q), self.data(bias), self.data(v));
        let mut out = vec![0.0; batch * n * m];
        let mut pb = vec![0.0; a];
        for b in 0..batch {
            for i in 0..n {
                let pi = &pd[(b * n + i) * a..(b * n + i + 1) * a];
                pb.iter_mut()
                    .zip(pi.iter().zip(bd))
                    .for_each(|(o, (x, y))| *o = x + y);
                for j in 0..m {
                    let qj = &qd[(b * m + j) * a..(b * m + j + 1) * a];
                    let mut s = 0.0;
                    for k in 0..a {
                        s += vd[k] * (pb[k] + qj[k]).tanh();
                    }
                    out[(b * n + i) * m + j] = s;
                }
            }
        }
        self.push(
            &[batch, n, m],
            out,
            Op::PairwiseScores { p, q, bias, v },
            &[p, q, bias, v],
        )
    }

    /// Softmax over the last axis, max-shifted.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let width = xs[xs.len() - 1];
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(width) {
            softmax_in_place(row);
        }
        self.push(&xs, out, Op::SoftmaxLast(x), &[x])
    }

    /// Batched matrix product `[batch, n, m] x [batch, m, f] -> [batch, n, f]`.
    pub fn bmm(&mut self, a: Var, h: Var) -> Result<Var> {
        let (sa, sh) = (self.shape(a).to_vec(), self.shape(h).to_vec());
        if sa.len() != 3 || sh.len() != 3 || sa[0] != sh[0] || sa[2] != sh[1] {
            return Err(shape_err(format!("bmm {sa:?} x {sh:?}")));
        }
        let (batch, n, m, f) = (sa[0], sa[1], sa[2], sh[2]);
        let mut out = vec![0.0; batch * n * f];
        let (ad, hd) = (self.data(a), self.data(h));
        for b in 0..batch {
            gemm(
                n,
                m,
                f,
                &ad[b * n * m..],
                false,
                &hd[b * m * f..],
                false,
                &mut out[b * n * f..(b + 1) * n * f],
                0.0,
            );
        }
        self.push(&[batch, n, f], out, Op::Bmm(a, h), &[a, h])
    }

    /// Mean over axis 1 of `[batch, n, f]`.
    pub fn mean_axis1(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape_err(format!("mean_axis1 of {xs:?}")));
        }
        let (batch, n, f) = (xs[0], xs[1], xs[2]);
        let xd = self.data(x);
        let mut out = vec![0.0; batch * f];
        for b in 0..batch {
            for i in 0..n {
                let row = &xd[(b * n + i) * f..(b * n + i + 1) * f];
                out[b * f..(b + 1) * f]
                    .iter_mut()
                    .zip(row)
                    .for_each(|(o, v)| *o += v);
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        self.push(&[batch, f], out, Op::MeanAxis1(x), &[x])
    }

    /// Mean negative log-likelihood of two-class logits `[batch, 2]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[1] != 2 {
            return Err(shape_err(format!("expected [batch, 2] logits, got {ls:?}")));
        }
        if labels.len() != ls[0] {
            return Err(shape_err(format!(
                "{} labels for a batch of {}",
                labels.len(),
                ls[0]
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidLabel(bad));
        }
        let mut probs = self.data(logits).to_vec();
        let mut loss = 0.0;
        for (row, &label) in probs.chunks_mut(2).zip(labels) {
            let m = row[0].max(row[1]);
            let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
            loss += lse - row[label];
            softmax_in_place(row);
        }
        loss /= labels.len() as f64;
        self.push(
            &[1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// `sum_i weights[i] * x[i]` as a one-element tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(shape_err("weighted_sum weight count mismatch"));
        }
        let s = self.data(x).iter().zip(weights).map(|(a, b)| a * b).sum();
        self.push(
            &[1],
            vec![s],
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            &[x],
        )
    }

    /// Gradients of the one-element node `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn send(&self, grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
        if self.needs(var) {
            accumulate(&mut grads[var.0], delta);
        }
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, dilation } => {
                let xs = self.shape(*x);
                let ws = self.shape(*w);
                let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
                let (c_out, kernel) = (ws[0], ws[2]);
                let out_len = node.value.shape()[2];
                let rows = c_in * kernel;
                let xd = self.data(*x);
                let wd = self.data(*w);
                let mut col = vec![0.0; rows * out_len];
                let mut dcol = vec![0.0; rows * out_len];
                let mut dw = vec![0.0; wd.len()];
                let mut dx = self.needs(*x).then(|| vec![0.0; xd.len()]);
                for bi in 0..batch {
                    let gb = &g[bi * c_out * out_len..(bi + 1) * c_out * out_len];
                    if self.needs(*w) {
                        im2col(&xd[bi * c_in * len..(bi + 1) * c_in * len], c_in, len, kernel, *dilation, out_len, &mut col);
                        gemm(c_out, out_len, rows, gb, false, &col, true, &mut dw, 1.0);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(rows, c_out, out_len, wd, true, gb, false, &mut dcol, 0.0);
                        col2im_add(&dcol, c_in, len, kernel, *dilation, out_len, &mut dx[bi * c_in * len..(bi + 1) * c_in * len]);
                    }
                }
                if let Some(dx) = dx {
                    self.send(grads, *x, dx);
                }
                self.send(grads, *w, dw);
                if let Some(b) = b {
                    let mut db = vec![0.0; c_out];
                    for (i, chunk) in g.chunks(out_len).enumerate() {
                        db[i % c_out] += chunk.iter().sum::<f64>();
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let xs = self.shape(*x);
                let (batch, ch, len) = (xs[0], xs[1], xs[2]);
                let gd = self.data(*gamma);
                let count = (batch * len) as f64;
                let mut dgamma = vec![0.0; ch];
                let mut dbeta = vec![0.0; ch];
                for bi in 0..batch {
                    for c in 0..ch {
                        let off = (bi * ch + c) * len;
                        for t in off..off + len {
                            dgamma[c] += g[t] * xhat[t];
                            dbeta[c] += g[t];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for bi in 0..batch {
                        for c in 0..ch {
                            let off = (bi * ch + c) * len;
                            let scale = gd[c] * inv_std[c];
                            for t in off..off + len {
                                dx[t] = if *training {
                                    scale / count
                                        * (count * g[t] - dbeta[c] - xhat[t] * dgamma[c])
                                } else {
                                    scale * g[t]
                                };
                            }
                        }
                    }
                    self.send(grads, *x, dx);
                }
                self.send(grads, *gamma, dgamma);
                self.send(grads, *beta, dbeta);
            }
            Op::LeakyRelu { x, slope } => {
                let dx = self
                    .data(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > 0.0 { gi } else { slope * gi })
                    .collect();
                self.send(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.to_vec());
                self.send(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if self.needs(*a) {
                    self.send(grads, *a, g.iter().zip(bd).map(|(x, y)| x * y).collect());
                }
                if self.needs(*b) {
                    self.send(grads, *b, g.iter().zip(ad).map(|(x, y)| x * y).collect());
                }
            }
            Op::Sigmoid(x) => {
                let dx = g.iter().zip(out).map(|(gi, y)| gi * y * (1.0 - y)).collect();
                self.send(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let dx = g.iter().zip(out).map(|(gi, y)| gi * (1.0 - y * y)).collect();
                self.send(grads, *x, dx);
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (rows, inp) = (xs[0], xs[1]);
                let outp = self.shape(*w)[0];
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * inp];
                    gemm(rows, outp, inp, g, false, self.data(*w), false, &mut dx, 0.0);
                    self.send(grads, *x, dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; outp * inp];
                    gemm(outp, rows, inp, g, true, self.data(*x), false, &mut dw, 0.0);
                    self.send(grads, *w, dw);
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; outp];
                    for row in g.chunks(outp) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    self.send(grads, *b, db);
                }
            }
            Op::Reshape(x) => self.send(grads, *x, g.to_vec()),
            Op::CropTime { x, offset } => {
                let full = self.shape(*x)[2];
                let len = node.value.shape()[2];
                let mut dx = vec![0.0; self.value(*x).len()];
                for (drow, grow) in dx.chunks_mut(full).zip(g.chunks(len)) {
                    drow[*offset..*offset + len].copy_from_slice(grow);
                }
                self.send(grads, *x, dx);
            }
            Op::MeanLast(x) => {
                let xs = self.shape(*x);
                let len = xs[xs.len() - 1];
                let dx = g
                    .iter()
                    .flat_map(|&gi| std::iter::repeat(gi / len as f64).take(len))
                    .collect();
                self.send(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let cols = self.shape(*x)[1];
                let len = node.value.shape()[1];
                let mut dx = vec![0.0; self.value(*x).len()];
                for (drow, grow) in dx.chunks_mut(cols).zip(g.chunks(len)) {
                    drow[*start..*start + len].copy_from_slice(grow);
                }
                self.send(grads, *x, dx);
            }
            Op::ConcatCols(a, b) => {
                let (fa, fb) = (self.shape(*a)[1], self.shape(*b)[1]);
                let mut da = Vec::with_capacity(self.value(*a).len());
                let mut db = Vec::with_capacity(self.value(*b).len());
                for row in g.chunks(fa + fb) {
                    da.extend_from_slice(&row[..fa]);
                    db.extend_from_slice(&row[fa..]);
                }
                self.send(grads, *a, da);
                self.send(grads, *b, db);
            }
            Op::Step { x, t } => {
                let xs = self.shape(*x);
                let (steps, feat) = (xs[1], xs[2]);
                let mut dx = vec![0.0; self.value(*x).len()];
                for (b, grow) in g.chunks(feat).enumerate() {
                    let off = (b * steps + t) * feat;
                    dx[off..off + feat].copy_from_slice(grow);
                }
                self.send(grads, *x, dx);
            }
            Op::Stack(parts) => {
                let s = node.value.shape();
                let (steps, feat) = (s[1], s[2]);
                for (t, p) in parts.iter().enumerate() {
                    if !self.needs(*p) {
                        continue;
                    }
                    let dp = g
                        .chunks(steps * feat)
                        .flat_map(|b| b[t * feat..(t + 1) * feat].iter().copied())
                        .collect();
                    self.send(grads, *p, dp);
                }
            }
            Op::Gather { x, segments } => {
                let xs = self.shape(*x);
                let (steps, feat) = (xs[1], xs[2]);
                let seg_len = segments[0].len();
                let mut dx = vec![0.0; self.value(*x).len()];
                let mut chunks = g.chunks(seg_len * feat);
                for b in 0..xs[0] {
                    for s in segments {
                        let gs = chunks.next().expect("gather gradient length");
                        let lo = (b * steps + s.start) * feat;
                        dx[lo..lo + seg_len * feat]
                            .iter_mut()
                            .zip(gs)
                            .for_each(|(d, v)| *d += v);
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::PairwiseScores { p, q, bias, v } => {
                let ps = self.shape(*p);
                let (batch, n, a) = (ps[0], ps[1], ps[2]);
                let m = self.shape(*q)[1];
                let (pd, qd, bd, vd) = (self.data(*p), self.data(*q), self.data(*bias), self.data(*v));
                let mut dp = vec![0.0; pd.len()];
                let mut dq = vec![0.0; qd.len()];
                let mut dbias = vec![0.0; a];
                let mut dv = vec![0.0; a];
                let mut pb = vec![0.0; a];
                for b in 0..batch {
                    for i in 0..n {
                        let pi = (b * n + i) * a;
                        for k in 0..a {
                            pb[k] = pd[pi + k] + bd[k];
                        }
                        for j in 0..m {
                            let gs = g[(b * n + i) * m + j];
                            if gs == 0.0 {
                                continue;
                            }
                            let qj = (b * m + j) * a;
                            for k in 0..a {
                                let e = (pb[k] + qd[qj + k]).tanh();
                                dv[k] += gs * e;
                                let dz = gs * vd[k] * (1.0 - e * e);
                                dp[pi + k] += dz;
                                dq[qj + k] += dz;
                                dbias[k] += dz;
                            }
                        }
                    }
                }
                self.send(grads, *p, dp);
                self.send(grads, *q, dq);
                self.send(grads, *bias, dbias);
                self.send(grads, *v, dv);
            }
            Op::SoftmaxLast(x) => {
                let xs = self.shape(*x);
                let width = xs[xs.len() - 1];
                let mut dx = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks(width).zip(out.chunks(width)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    dx.extend(grow.iter().zip(yrow).map(|(gi, yi)| yi * (gi - dot)));
                }
                self.send(grads, *x, dx);
            }
            Op::Bmm(a, h) => {
                let sa = self.shape(*a);
                let (batch, n, m) = (sa[0], sa[1], sa[2]);
                let f = self.shape(*h)[2];
                let (ad, hd) = (self.data(*a), self.data(*h));
                if self.needs(*a) {
                    let mut da = vec![0.0; ad.len()];
                    for b in 0..batch {
                        gemm(n, f, m, &g[b * n * f..], false, &hd[b * m * f..], true, &mut da[b * n * m..(b + 1) * n * m], 0.0);
                    }
                    self.send(grads, *a, da);
                }
                if self.needs(*h) {
                    let mut dh = vec![0.0; hd.len()];
                    for b in 0..batch {
                        gemm(m, n, f, &ad[b * n * m..], true, &g[b * n * f..], false, &mut dh[b * m * f..(b + 1) * m * f], 0.0);
                    }
                    self.send(grads, *h, dh);
                }
            }
            Op::MeanAxis1(x) => {
                let xs = self.shape(*x);
                let (batch, n, f) = (xs[0], xs[1], xs[2]);
                let mut dx = vec![0.0; batch * n * f];
                for b in 0..batch {
                    for i in 0..n {
                        for k in 0..f {
                            dx[(b * n + i) * f + k] = g[b * f + k] / n as f64;
                        }
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let scale = g[0] / labels.len() as f64;
                let mut dx = probs.clone();
                for (row, &label) in dx.chunks_mut(2).zip(labels) {
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                self.send(grads, *logits, dx);
            }
            Op::WeightedSum { x, weights } => {
                self.send(grads, *x, weights.iter().map(|w| w * g[0]).collect());
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v /= s);
}

fn im2col(x: &[f64], c_in: usize, len: usize, kernel: usize, dilation: usize, out_len: usize, col: &mut [f64]) {
    for ci in 0..c_in {
        let xrow = &x[ci * len..(ci + 1) * len];
        for k in 0..kernel {
            let r = (ci * kernel + k) * out_len;
            let shift = k * dilation;
            col[r..r + out_len].copy_from_slice(&xrow[shift..shift + out_len]);
        }
    }
}

fn col2im_add(dcol: &[f64], c_in: usize, len: usize, kernel: usize, dilation: usize, out_len: usize, dx: &mut [f64]) {
    for ci in 0..c_in {
        let xrow = &mut dx[ci * len..(ci + 1) * len];
        for k in 0..kernel {
            let r = (ci * kernel + k) * out_len;
            let shift = k * dilation;
            xrow[shift..shift + out_len]
                .iter_mut()
                .zip(&dcol[r..r + out_len])
                .for_each(|(d, c)| *d += c);
        }
    }
}
