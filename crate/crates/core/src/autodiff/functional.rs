//! Tensor-in, tensor-out forms of the graph operations, for inference and
//! for checking individual layers without building a graph by hand.

use crate::autodiff::layers::{self, LstmVars, RunningStats};
use crate::autodiff::{softmax_in_place, Graph, Tensor};
use crate::error::{Error, Result};

/// Valid stride-1 convolution of one `[c_in, length]` signal.
pub fn conv1d(input: &Tensor, weight: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 2 {
        return Err(Error::InvalidShape(format!("conv1d input must be [channels, length], got {s:?}")));
    }
    let mut g = Graph::new();
    let x = g.leaf(input.clone().reshape(&[1, s[0], s[1]])?);
    let w = g.leaf(weight.clone());
    let b = g.leaf(bias.clone());
    let y = g.conv1d(x, w, Some(b), dilation)?;
    let out = g.value(y).clone();
    let os = out.shape().to_vec();
    out.reshape(&os[1..])
}

pub fn batch_norm1d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    training: bool,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.leaf(input.clone());
    let ga = g.leaf(gamma.clone());
    let be = g.leaf(beta.clone());
    let y = layers::batch_norm1d(&mut g, x, ga, be, stats, training)?;
    Ok(g.value(y).clone())
}

pub fn leaky_relu(input: &Tensor, slope: f64) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.leaf(input.clone());
    let y = g.leaky_relu(x, slope)?;
    Ok(g.value(y).clone())
}

pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.leaf(input.clone());
    let w = g.leaf(weight.clone());
    let b = g.leaf(bias.clone());
    let y = g.linear(x, w, Some(b))?;
    Ok(g.value(y).clone())
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

/// Runs a bidirectional LSTM over a `[steps, features]` sequence and
/// returns `[steps, 2 * hidden]`.
pub fn bilstm(sequence: &Tensor, hidden: usize, forward: &LstmWeights, backward: &LstmWeights) -> Result<Tensor> {
    let s = sequence.shape();
    if s.len() != 2 {
        return Err(Error::InvalidShape(format!("sequence must be [steps, features], got {s:?}")));
    }
    for w in [forward, backward] {
        if w.w_ih.shape() != [4 * hidden, s[1]] || w.w_hh.shape() != [4 * hidden, hidden] || w.bias.shape() != [4 * hidden] {
            return Err(Error::InvalidShape("LSTM weight shapes do not match hidden size".into()));
        }
    }
    let mut g = Graph::new();
    let x = g.leaf(sequence.clone().reshape(&[1, s[0], s[1]])?);
    let mut bind = |w: &LstmWeights| LstmVars {
        w_ih: g.leaf(w.w_ih.clone()),
        w_hh: g.leaf(w.w_hh.clone()),
        bias: g.leaf(w.bias.clone()),
    };
    let (f, b) = (bind(forward), bind(backward));
    let y = layers::bilstm(&mut g, x, f, b, hidden)?;
    g.value(y).clone().reshape(&[s[0], 2 * hidden])
}

/// Mean two-class cross-entropy of `[batch, 2]` logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.leaf(logits.clone());
    let y = g.softmax_cross_entropy(x, labels)?;
    Ok(g.value(y).data()[0])
}

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let width = out.shape()[out.shape().len() - 1];
    for row in out.data_mut().chunks_mut(width) {
        softmax_in_place(row);
    }
    out
}
