//! Composite layers assembled from graph primitives.

use crate::autodiff::{BatchMoments, Graph, NormStats, Var};
use crate::error::Result;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept on the previous running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Running per-channel moments used by batch normalization in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: &BatchMoments) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

/// Batch normalization over `[batch, channels, length]`. Training mode
/// normalizes with batch moments and folds them into `stats`.
pub fn batch_norm1d(
    g: &mut Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: &mut RunningStats,
    training: bool,
) -> Result<Var> {
    if training {
        let (y, moments) = g.batch_norm(x, gamma, beta, NormStats::Batch { epsilon: BN_EPSILON })?;
        if let Some(m) = moments {
            stats.update(&m);
        }
        Ok(y)
    } else {
        let (y, _) = g.batch_norm(
            x,
            gamma,
            beta,
            NormStats::Running {
                mean: &stats.mean,
                var: &stats.var,
                epsilon: BN_EPSILON,
            },
        )?;
        Ok(y)
    }
}

/// One LSTM direction: input weights `[4H, in]`, recurrent weights
/// `[4H, H]`, bias `[4H]`, gates ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

fn lstm_direction(
    g: &mut Graph,
    seq: Var,
    p: LstmVars,
    hidden: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let s = g.shape(seq).to_vec();
    let (batch, steps, feat) = (s[0], s[1], s[2]);
    let flat = g.reshape(seq, &[batch * steps, feat])?;
    let proj = g.linear(flat, p.w_ih, Some(p.bias))?;
    let proj = g.reshape(proj, &[batch, steps, 4 * hidden])?;
    let mut outputs: Vec<Option<Var>> = vec![None; steps];
    let mut state: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let mut gates = g.step(proj, t)?;
        if let Some((h, _)) = state {
            let rec = g.linear(h, p.w_hh, None)?;
            gates = g.add(gates, rec)?;
        }
        let i = g.slice_cols(gates, 0, hidden)?;
        let i = g.sigmoid(i)?;
        let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
        let cand = g.tanh(cand)?;
        let o = g.slice_cols(gates, 3 * hidden, hidden)?;
        let o = g.sigmoid(o)?;
        let mut c = g.mul(i, cand)?;
        if let Some((_, c_prev)) = state {
            let f = g.slice_cols(gates, hidden, hidden)?;
            let f = g.sigmoid(f)?;
            let kept = g.mul(f, c_prev)?;
            c = g.add(c, kept)?;
        }
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
}

/// Bidirectional LSTM over `[batch, steps, features]` with zero initial
/// state. Step `j` of the `[batch, steps, 2H]` output is the forward state
/// after consuming steps `0..=j` followed by the backward state after
/// consuming steps `j..` in reverse.
pub fn bilstm(g: &mut Graph, seq: Var, forward: LstmVars, backward: LstmVars, hidden: usize) -> Result<Var> {
    let fwd = lstm_direction(g, seq, forward, hidden, false)?;
    let bwd = lstm_direction(g, seq, backward, hidden, true)?;
    let mut joined = Vec::with_capacity(fwd.len());
    for (f, b) in fwd.into_iter().zip(bwd) {
        joined.push(g.concat_cols(f, b)?);
    }
    g.stack(&joined)
}
