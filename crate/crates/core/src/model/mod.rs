//! The four classifier architectures.
//!
//! Every variant shares the same skeleton: one convolutional encoder applied
//! independently to each ROI's series (weights shared across ROIs), global
//! average pooling over time, a BiLSTM that steps across the ROI axis, and a
//! two-layer classifier head. Because nothing depends on the number of ROIs
//! or the series length, the parameter count is a function of the
//! configuration alone.

mod checkpoint;
mod config;
mod slicing;

use rand::Rng;

use crate::autodiff::{
    bilstm, xavier_init, BatchMoments, Graph, LstmVars, NormStats, ParamStore, RunningStats, Tensor, Var,
    BN_EPSILON, LEAKY_SLOPE,
};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use config::{
    ModelConfig, Slicing, Variant, ATTENTION_SIZE, CONV_CHANNELS, DEFAULT_DILATION, DEFAULT_SLICE_LENGTH,
    DEFAULT_SLICE_STRIDE, FC_SIZE, HIDDEN_SIZE, KERNEL, N_CLASSES,
};
pub use slicing::{fit_slicing, slice_sequence};

/// Normalization behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; observed moments are returned to the caller.
    Train,
    /// Running statistics; a pure function of the inputs.
    Eval,
}

/// Row-stochastic attention matrix `[n, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub alpha: Tensor,
}

impl AttentionWeights {
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.alpha.shape()[1];
        self.alpha.data().chunks(n).map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LstmIdx {
    w_ih: usize,
    w_hh: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv_w: [usize; 4],
    conv_b: [usize; 4],
    gamma: [usize; 4],
    beta: [usize; 4],
    skip: Option<usize>,
    fwd: LstmIdx,
    bwd: LstmIdx,
    /// Scoring weight `[A, 4H]`, bias `[A]`, projection `[A]`.
    attention: Option<(usize, usize, usize)>,
    fc_w: usize,
    fc_b: usize,
    cls_w: usize,
    cls_b: usize,
}

/// Result of [`Model::forward`].
#[derive(Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    /// Moments of each normalization layer, in order; empty in eval mode.
    pub moments: Vec<BatchMoments>,
    /// Attention matrix `[batch, n, n]` for attention variants.
    pub attention: Option<Var>,
}

/// A materialized classifier: configuration, parameters, and the running
/// statistics of its normalization layers.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    norms: Vec<RunningStats>,
    layout: Layout,
}

fn lstm_params<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<LstmIdx> {
    let gates = 4 * hidden;
    Ok(LstmIdx {
        w_ih: store.add(&format!("{prefix}.w_ih"), xavier_init(&[gates, input], input, gates, rng)?, false)?,
        w_hh: store.add(&format!("{prefix}.w_hh"), xavier_init(&[gates, hidden], hidden, gates, rng)?, false)?,
        bias: store.add(&format!("{prefix}.bias"), Tensor::zeros(&[gates])?, true)?,
    })
}

/// Builds a model with Xavier-uniform weights and zero biases.
pub fn build_model<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Model> {
    config.validate()?;
    let mut s = ParamStore::new();
    let k = config.kernel;
    let mut conv_w = [0; 4];
    let mut conv_b = [0; 4];
    let mut gamma = [0; 4];
    let mut beta = [0; 4];
    let mut c_in = 1;
    for (i, &c_out) in config.conv_channels.iter().enumerate() {
        let w = xavier_init(&[c_out, c_in, k], c_in * k, c_out * k, rng)?;
        conv_w[i] = s.add(&format!("encoder.conv{i}.weight"), w, false)?;
        conv_b[i] = s.add(&format!("encoder.conv{i}.bias"), Tensor::zeros(&[c_out])?, true)?;
        gamma[i] = s.add(&format!("encoder.norm{i}.gamma"), Tensor::full(&[c_out], 1.0)?, true)?;
        beta[i] = s.add(&format!("encoder.norm{i}.beta"), Tensor::zeros(&[c_out])?, true)?;
        c_in = c_out;
    }
    let feat = c_in;
    let skip = if config.variant == Variant::Asdrnn {
        let w = xavier_init(&[feat, 1, 1], 1, feat, rng)?;
        Some(s.add("encoder.skip.weight", w, false)?)
    } else {
        None
    };
    let h = config.hidden_size;
    let fwd = lstm_params(&mut s, "rnn.forward", feat, h, rng)?;
    let bwd = lstm_params(&mut s, "rnn.backward", feat, h, rng)?;
    let attention = if config.variant.has_attention() {
        let a = ATTENTION_SIZE;
        let w = s.add("attention.weight", xavier_init(&[a, 4 * h], 4 * h, a, rng)?, false)?;
        let b = s.add("attention.bias", Tensor::zeros(&[a])?, true)?;
        let v = s.add("attention.score", xavier_init(&[a], a, 1, rng)?, false)?;
        Some((w, b, v))
    } else {
        None
    };
    let fc = config.fc_size;
    let fc_w = s.add("head.fc.weight", xavier_init(&[fc, 2 * h], 2 * h, fc, rng)?, false)?;
    let fc_b = s.add("head.fc.bias", Tensor::zeros(&[fc])?, true)?;
    let nc = config.n_classes;
    let cls_w = s.add("head.classifier.weight", xavier_init(&[nc, fc], fc, nc, rng)?, false)?;
    let cls_b = s.add("head.classifier.bias", Tensor::zeros(&[nc])?, true)?;
    let norms = config.conv_channels.iter().map(|&c| RunningStats::new(c)).collect();
    Ok(Model {
        config: config.clone(),
        params: s,
        norms,
        layout: Layout {
            conv_w,
            conv_b,
            gamma,
            beta,
            skip,
            fwd,
            bwd,
            attention,
            fc_w,
            fc_b,
            cls_w,
            cls_b,
        },
    })
}

impl LstmIdx {
    fn vars(self, p: &[Var]) -> LstmVars {
        LstmVars {
            w_ih: p[self.w_ih],
            w_hh: p[self.w_hh],
            bias: p[self.bias],
        }
    }
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn norms(&self) -> &[RunningStats] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [RunningStats] {
        &mut self.norms
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Folds training-batch moments into the running statistics.
    pub fn apply_moments(&mut self, moments: &[BatchMoments]) {
        for (stats, m) in self.norms.iter_mut().zip(moments) {
            stats.update(m);
        }
    }

    fn check_len(&self, t: usize) -> Result<()> {
        let required = self.config.min_time_len();
        if t < required {
            return Err(Error::SequenceTooShort { length: t, required });
        }
        Ok(())
    }

    /// Shared per-ROI encoder: `[n, 1, T] -> [n, C]`.
    fn encode_graph(
        &self,
        g: &mut Graph,
        p: &[Var],
        x: Var,
        mode: Mode,
        moments: &mut Vec<BatchMoments>,
    ) -> Result<Var> {
        let t = g.shape(x)[2];
        self.check_len(t)?;
        let l = &self.layout;
        let dilation = self.config.encoder_dilation();
        let mut h = x;
        let last = self.config.conv_channels.len() - 1;
        for i in 0..=last {
            h = g.conv1d(h, p[l.conv_w[i]], Some(p[l.conv_b[i]]), dilation)?;
            let stats = match mode {
                Mode::Train => NormStats::Batch { epsilon: BN_EPSILON },
                Mode::Eval => NormStats::Running {
                    mean: &self.norms[i].mean,
                    var: &self.norms[i].var,
                    epsilon: BN_EPSILON,
                },
            };
            let (y, m) = g.batch_norm(h, p[l.gamma[i]], p[l.beta[i]], stats)?;
            moments.extend(m);
            h = y;
            if i == last {
                if let Some(skip) = l.skip {
                    let proj = g.conv1d(x, p[skip], None, 1)?;
                    let out_len = g.shape(h)[2];
                    let offset = (t - out_len) / 2;
                    let aligned = g.crop_time(proj, offset, out_len)?;
                    h = g.add(h, aligned)?;
                }
            }
            h = g.leaky_relu(h, LEAKY_SLOPE)?;
        }
        g.mean_last(h)
    }

    /// Attention contexts `[b, n, F]` and weights `[b, n, n]` over `h: [b, n, F]`.
    fn attention_graph(&self, g: &mut Graph, p: &[Var], h: Var) -> Result<(Var, Var)> {
        let (w, b, v) = self
            .layout
            .attention
            .ok_or_else(|| Error::Config(format!("{} has no attention layer", self.config.variant)))?;
        let s = g.shape(h).to_vec();
        let (batch, n, f) = (s[0], s[1], s[2]);
        let flat = g.reshape(h, &[batch * n, f])?;
        let w_left = g.slice_cols(p[w], 0, f)?;
        let w_right = g.slice_cols(p[w], f, f)?;
        let left = g.linear(flat, w_left, None)?;
        let left = g.reshape(left, &[batch, n, ATTENTION_SIZE])?;
        let right = g.linear(flat, w_right, None)?;
        let right = g.reshape(right, &[batch, n, ATTENTION_SIZE])?;
        let scores = g.pairwise_scores(left, right, p[b], p[v])?;
        let alpha = g.softmax_last(scores)?;
        let ctx = g.bmm(alpha, h)?;
        Ok((ctx, alpha))
    }

    /// Records a forward pass over `batch: [B, N_R, T]` and returns `[B, 2]`
    /// logits. `params` are the vars returned by `self.params().bind(g)`.
    pub fn forward(&self, g: &mut Graph, params: &[Var], batch: &Tensor, mode: Mode) -> Result<ForwardOutput> {
        let s = batch.shape();
        if s.len() != 3 {
            return Err(Error::InvalidShape(format!("batch must be [B, N_R, T], got {s:?}")));
        }
        let x = g.leaf(batch.clone().with_requires_grad(false));
        self.forward_var(g, params, x, mode)
    }

    /// As [`forward`](Self::forward) with the batch already on the graph.
    pub fn forward_var(&self, g: &mut Graph, p: &[Var], x: Var, mode: Mode) -> Result<ForwardOutput> {
        let s = g.shape(x).to_vec();
        let (b, n, t) = (s[0], s[1], s[2]);
        let l = &self.layout;
        let mut moments = Vec::new();
        let seqs = g.reshape(x, &[b * n, 1, t])?;
        let feats = self.encode_graph(g, p, seqs, mode, &mut moments)?;
        let c = g.shape(feats)[1];
        let feats = g.reshape(feats, &[b, n, c])?;
        let hidden = self.config.hidden_size;
        let mut attention = None;
        let pooled = match self.config.variant {
            Variant::SccnnRnn => {
                let h = bilstm(g, feats, l.fwd.vars(p), l.bwd.vars(p), hidden)?;
                g.step(h, n - 1)?
            }
            Variant::Ascrnn | Variant::Asdrnn => {
                let h = bilstm(g, feats, l.fwd.vars(p), l.bwd.vars(p), hidden)?;
                let (ctx, alpha) = self.attention_graph(g, p, h)?;
                attention = Some(alpha);
                g.mean_axis1(ctx)?
            }
            Variant::Assrnn => {
                let sl = self.config.slicing.expect("validated");
                let (len, stride) = fit_slicing(n, sl.length, sl.stride);
                let windows = slice_sequence(n, len, stride)?;
                let segs = g.gather_windows(feats, &windows)?;
                let h = bilstm(g, segs, l.fwd.vars(p), l.bwd.vars(p), hidden)?;
                let last = g.step(h, len - 1)?;
                let seq = g.reshape(last, &[b, windows.len(), 2 * hidden])?;
                let (ctx, alpha) = self.attention_graph(g, p, seq)?;
                attention = Some(alpha);
                g.mean_axis1(ctx)?
            }
        };
        let fc = g.linear(pooled, p[l.fc_w], Some(p[l.fc_b]))?;
        let fc = g.leaky_relu(fc, LEAKY_SLOPE)?;
        let logits = g.linear(fc, p[l.cls_w], Some(p[l.cls_b]))?;
        Ok(ForwardOutput {
            logits,
            moments,
            attention,
        })
    }

    /// Eval-mode logits `[B, 2]` for `batch: [B, N_R, T]`.
    pub fn classify_forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let out = self.forward(&mut g, &p, batch, Mode::Eval)?;
        Ok(g.value(out.logits).clone())
    }

    fn bind_frozen(&self, g: &mut Graph) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.tensor.clone().with_requires_grad(false)))
            .collect()
    }

    /// Eval-mode encoder features `[n, C]` for `n` independent ROI series `[n, T]`.
    pub fn encode(&self, signals: &Tensor) -> Result<Tensor> {
        let s = signals.shape();
        if s.len() != 2 {
            return Err(Error::InvalidShape(format!("signals must be [n, T], got {s:?}")));
        }
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let x = g.leaf(signals.clone().reshape(&[s[0], 1, s[1]])?);
        let y = self.encode_graph(&mut g, &p, x, Mode::Eval, &mut Vec::new())?;
        Ok(g.value(y).clone())
    }

    /// BiLSTM over ROI features `[N_R, C]`, giving `[N_R, 2H]`.
    pub fn roi_sequence_encode(&self, features: &Tensor) -> Result<Tensor> {
        let s = features.shape();
        if s.len() != 2 {
            return Err(Error::InvalidShape(format!("features must be [N_R, C], got {s:?}")));
        }
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let x = g.leaf(features.clone().reshape(&[1, s[0], s[1]])?);
        let l = &self.layout;
        let y = bilstm(&mut g, x, l.fwd.vars(&p), l.bwd.vars(&p), self.config.hidden_size)?;
        g.value(y).clone().reshape(&[s[0], 2 * self.config.hidden_size])
    }

    /// Pairwise attention over hidden states `h: [N_R, 2H]`, returning the
    /// per-ROI contexts `[N_R, 2H]` and the weight matrix.
    pub fn attentive_attention(&self, h: &Tensor) -> Result<(Tensor, AttentionWeights)> {
        let s = h.shape();
        if s.len() != 2 || s[1] != 2 * self.config.hidden_size {
            return Err(Error::InvalidShape(format!(
                "hidden states must be [N_R, {}], got {s:?}",
                2 * self.config.hidden_size
            )));
        }
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let x = g.leaf(h.clone().reshape(&[1, s[0], s[1]])?);
        let (ctx, alpha) = self.attention_graph(&mut g, &p, x)?;
        let ctx = g.value(ctx).clone().reshape(&[s[0], s[1]])?;
        let alpha = g.value(alpha).clone().reshape(&[s[0], s[0]])?;
        Ok((ctx, AttentionWeights { alpha }))
    }
}

/// Trainable scalar count of `model`.
pub fn param_count(model: &Model) -> usize {
    model.param_count()
}
