mod common;

use common::{end_to_end_grad_check, grad_report_ok, random, small_variants};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roiranknet::autodiff::functional::{self, softmax_rows};
use roiranknet::autodiff::{grad_check_sampled, Graph, Tensor, BN_EPSILON};
use roiranknet::model::{
    build_model, load_checkpoint, param_count, save_checkpoint, slice_sequence, Mode, Model, ModelConfig, Variant,
};
use roiranknet::Error;

fn model(config: &ModelConfig, seed: u64) -> Model {
    build_model(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn tensor_of<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    let i = m.params().index_of(name).unwrap_or_else(|| panic!("no parameter {name}"));
    &m.params().get(i).tensor
}

/// Trainable scalars enumerated layer by layer from the architecture.
fn enumerate_params(variant: Variant) -> usize {
    let channels = [1, 32, 64, 96, 96];
    let conv: usize = (0..4).map(|i| channels[i + 1] * channels[i] * 3 + channels[i + 1]).sum();
    let norm: usize = (1..5).map(|i| 2 * channels[i]).sum();
    let (input, hidden) = (96, 128);
    let lstm = 2 * (4 * hidden * input + 4 * hidden * hidden + 4 * hidden);
    let fc = 256 * 128 + 128;
    let classifier = 128 * 2 + 2;
    let attention = 128 * 512 + 128 + 128;
    let base = conv + norm + lstm + fc + classifier;
    match variant {
        Variant::SccnnRnn => base,
        Variant::Ascrnn | Variant::Assrnn => base + attention,
        Variant::Asdrnn => base + attention + 96,
    }
}

const SCCNN_RNN_PARAMS: usize = 316_738;

#[test]
fn parameter_counts_match_enumeration() {
    assert_eq!(enumerate_params(Variant::SccnnRnn), SCCNN_RNN_PARAMS);
    for v in Variant::ALL {
        assert_eq!(model(&ModelConfig::new(v), 0).param_count(), enumerate_params(v), "{v}");
    }
    let asc = param_count(&model(&ModelConfig::ascrnn(), 0));
    assert_eq!(param_count(&model(&ModelConfig::asdrnn(), 0)) - asc, 96);
    for (l, w) in [(2, 1), (8, 4), (10, 10)] {
        assert_eq!(param_count(&model(&ModelConfig::assrnn(l, w), 0)), asc);
    }
}

#[test]
fn forward_accepts_any_roi_count_without_changing_capacity() {
    for config in small_variants() {
        let m = model(&config, 1);
        for n_rois in [1, 5, 13, 15] {
            let logits = m.classify_forward(&random(&[2, n_rois, 24], n_rois as u64)).unwrap();
            assert_eq!(logits.shape(), [2, 2]);
            assert!(logits.all_finite());
        }
        assert_eq!(m.param_count(), enumerate_params(config.variant));
    }
}

#[test]
fn batch_of_32_gives_32_rows() {
    for v in Variant::ALL {
        let m = model(&ModelConfig::new(v), 2);
        let logits = m.classify_forward(&random(&[32, 9, 20], 3)).unwrap();
        assert_eq!(logits.shape(), [32, 2]);
        for row in softmax_rows(&logits).data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_parameters() {
    let a = model(&ModelConfig::asdrnn(), 9);
    let b = model(&ModelConfig::asdrnn(), 9);
    let c = model(&ModelConfig::asdrnn(), 10);
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
    assert!(tensor_of(&a, "encoder.conv0.bias").data().iter().all(|&v| v == 0.0));
    assert!(tensor_of(&a, "encoder.norm0.gamma").data().iter().all(|&v| v == 1.0));
}

#[test]
fn invalid_configs_rejected() {
    let mut c = ModelConfig::sccnn_rnn();
    c.dilation = Some(2);
    assert!(matches!(build_model(&c, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Config(_))));
    let mut c = ModelConfig::assrnn(4, 2);
    c.hidden_size = 64;
    assert!(build_model(&c, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    assert!(build_model(&ModelConfig::assrnn(2, 3), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

/// Eval-mode encoder computed layer by layer with the tensor-level ops.
fn encoder_oracle(m: &Model, signal: &[f64], with_skip: bool) -> Vec<f64> {
    let t = signal.len();
    let d = m.config().encoder_dilation();
    let mut h = Tensor::new(&[1, t], signal.to_vec()).unwrap();
    for i in 0..4 {
        let conv = functional::conv1d(
            &h,
            tensor_of(m, &format!("encoder.conv{i}.weight")),
            tensor_of(m, &format!("encoder.conv{i}.bias")),
            d,
        )
        .unwrap();
        let (c, len) = (conv.shape()[0], conv.shape()[1]);
        let mut stats = m.norms()[i].clone();
        let normed = functional::batch_norm1d(
            &conv.reshape(&[1, c, len]).unwrap(),
            tensor_of(m, &format!("encoder.norm{i}.gamma")),
            tensor_of(m, &format!("encoder.norm{i}.beta")),
            &mut stats,
            false,
        )
        .unwrap();
        let mut normed = normed.reshape(&[c, len]).unwrap();
        if i == 3 && with_skip {
            let w = tensor_of(m, "encoder.skip.weight");
            let offset = (t - len) / 2;
            for ch in 0..c {
                for p in 0..len {
                    normed.data_mut()[ch * len + p] += w.data()[ch] * signal[offset + p];
                }
            }
        }
        h = functional::leaky_relu(&normed, 0.1).unwrap();
    }
    let len = h.shape()[1];
    h.data().chunks(len).map(|r| r.iter().sum::<f64>() / len as f64).collect()
}

fn perturb_running_stats(m: &mut Model, seed: u64) {
    for (i, s) in m.norms_mut().iter_mut().enumerate() {
        let r = random(&[s.channels()], seed + i as u64);
        for (k, v) in r.data().iter().enumerate() {
            s.mean[k] = 0.3 * v;
            s.var[k] = 1.0 + 0.5 * v.abs();
        }
    }
}

#[test]
fn encoder_matches_layerwise_oracle() {
    for config in [ModelConfig::sccnn_rnn(), ModelConfig::asdrnn()] {
        let mut m = model(&config, 4);
        perturb_running_stats(&mut m, 50);
        let signals = random(&[3, 40], 5);
        let feats = m.encode(&signals).unwrap();
        assert_eq!(feats.shape(), [3, 96]);
        for r in 0..3 {
            let want = encoder_oracle(&m, signals.row(r), config.variant == Variant::Asdrnn);
            for (a, b) in feats.row(r).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn zeroed_skip_projection_gives_plain_dilated_stack() {
    let mut m = model(&ModelConfig::asdrnn(), 6);
    m.params_mut().by_name_mut("encoder.skip.weight").unwrap().tensor.data_mut().fill(0.0);
    let signals = random(&[2, 32], 7);
    let feats = m.encode(&signals).unwrap();
    assert_eq!(feats.shape(), [2, 96]);
    for r in 0..2 {
        let want = encoder_oracle(&m, signals.row(r), false);
        assert_eq!(feats.row(r), want.as_slice());
    }
}

#[test]
fn encoder_shapes_and_weight_sharing() {
    let m = model(&ModelConfig::sccnn_rnn(), 8);
    for t in [16, 64, 171] {
        let feats = m.encode(&random(&[2, t], t as u64)).unwrap();
        assert_eq!(feats.shape(), [2, 96]);
    }
    let same = random(&[1, 30], 9);
    let mut rows = same.data().to_vec();
    rows.extend_from_slice(same.data());
    rows.extend(vec![0.0; 60]);
    let feats = m.encode(&Tensor::new(&[4, 30], rows).unwrap()).unwrap();
    assert_eq!(feats.row(0), feats.row(1));
    assert_eq!(feats.row(2), feats.row(3));
}

#[test]
fn encoder_rejects_short_series() {
    let plain = model(&ModelConfig::sccnn_rnn(), 0);
    assert!(matches!(plain.encode(&random(&[1, 8], 0)), Err(Error::SequenceTooShort { length: 8, required: 9 })));
    assert!(plain.encode(&random(&[1, 9], 0)).is_ok());
    let dilated = model(&ModelConfig::asdrnn(), 0);
    assert!(matches!(dilated.encode(&random(&[1, 16], 0)), Err(Error::SequenceTooShort { length: 16, required: 17 })));
    assert!(dilated.encode(&random(&[1, 17], 0)).is_ok());
}

#[test]
fn dilated_encoder_gradient_reaches_first_layer_through_negative_region() {
    let mut m = model(&ModelConfig::asdrnn(), 11);
    // push every normalized activation deep into the leaky region
    for i in 0..4 {
        m.params_mut().by_name_mut(&format!("encoder.norm{i}.beta")).unwrap().tensor.data_mut().fill(-20.0);
    }
    m.params_mut().by_name_mut("encoder.skip.weight").unwrap().tensor.data_mut().fill(0.0);
    let conv0 = m.params().index_of("encoder.conv0.weight").unwrap();
    let x = random(&[1, 2, 32], 12);
    let f = |g: &mut Graph, v: &[roiranknet::autodiff::Var]| {
        let mut p = m.params().bind(g);
        p[conv0] = v[0];
        let out = m.forward_var(g, &p, v[1], Mode::Eval)?;
        g.softmax_cross_entropy(out.logits, &[1])
    };
    let report = grad_check_sampled(f, &[tensor_of(&m, "encoder.conv0.weight").clone(), x], 1e-5, 96, 1).unwrap();
    assert!(report.probes.iter().filter(|p| p.input == 0).any(|p| p.analytic.abs() > 1e-12));
    assert!(grad_report_ok(&report), "{:?}", report.worst());
}

#[test]
fn roi_sequence_shapes_and_order_sensitivity() {
    let m = model(&ModelConfig::sccnn_rnn(), 13);
    assert_eq!(m.roi_sequence_encode(&random(&[15, 96], 14)).unwrap().shape(), [15, 256]);
    let one = m.roi_sequence_encode(&random(&[1, 96], 15)).unwrap();
    assert_eq!(one.shape(), [1, 256]);
    let feats = random(&[6, 96], 16);
    let mut swapped = feats.data().to_vec();
    swapped[..96].copy_from_slice(feats.row(5));
    swapped[5 * 96..].copy_from_slice(feats.row(0));
    let a = m.roi_sequence_encode(&feats).unwrap();
    let b = m.roi_sequence_encode(&Tensor::new(&[6, 96], swapped).unwrap()).unwrap();
    assert_ne!(a.row(2), b.row(2));
}

#[test]
fn attention_contract() {
    let m = model(&ModelConfig::ascrnn(), 17);
    let h = random(&[1, 256], 18);
    let (ctx, w) = m.attentive_attention(&h).unwrap();
    assert_eq!(w.alpha.data(), [1.0]);
    assert_eq!(ctx, h);

    let row = random(&[1, 256], 19);
    let shared = Tensor::new(&[5, 256], row.data().repeat(5)).unwrap();
    let (ctx, _) = m.attentive_attention(&shared).unwrap();
    for i in 0..5 {
        for (a, b) in ctx.row(i).iter().zip(row.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    for seed in 0..20 {
        let (ctx, w) = m.attentive_attention(&random(&[7, 256], 100 + seed)).unwrap();
        assert_eq!(ctx.shape(), [7, 256]);
        assert!(w.alpha.data().iter().all(|&a| a >= 0.0));
        assert!(w.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-6));
    }

    let h = random(&[2, 256], 20);
    let (ctx, _) = m.attentive_attention(&h).unwrap();
    for i in 0..2 {
        for k in 0..256 {
            let (lo, hi) = (h.row(0)[k].min(h.row(1)[k]), h.row(0)[k].max(h.row(1)[k]));
            assert!(ctx.row(i)[k] >= lo - 1e-15 && ctx.row(i)[k] <= hi + 1e-15);
        }
    }
}

#[test]
fn plain_model_has_no_attention() {
    let m = model(&ModelConfig::sccnn_rnn(), 0);
    assert!(matches!(m.attentive_attention(&random(&[2, 256], 0)), Err(Error::Config(_))));
}

#[test]
fn eval_forward_is_pure_and_row_independent() {
    for v in Variant::ALL {
        let mut m = model(&ModelConfig::new(v), 21);
        perturb_running_stats(&mut m, 60);
        let subject = random(&[1, 10, 24], 22);
        let other = random(&[1, 10, 24], 23);
        let mut data = subject.data().to_vec();
        data.extend_from_slice(other.data());
        data.extend_from_slice(subject.data());
        let batch = Tensor::new(&[3, 10, 24], data).unwrap();
        let a = m.classify_forward(&batch).unwrap();
        let b = m.classify_forward(&batch).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.row(0), a.row(2));
    }
}

#[test]
fn end_to_end_gradients_for_every_variant() {
    for config in small_variants() {
        let report = end_to_end_grad_check(&config, 6);
        assert!(grad_report_ok(&report), "{}: {:?}", config.variant, report.worst());
    }
}

#[test]
fn training_moments_update_running_statistics() {
    let mut m = model(&ModelConfig::sccnn_rnn(), 24);
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let out = m.forward(&mut g, &p, &random(&[2, 3, 20], 25), Mode::Train).unwrap();
    assert_eq!(out.moments.len(), 4);
    let before = m.norms().to_vec();
    m.apply_moments(&out.moments);
    for (b, a) in before.iter().zip(m.norms()) {
        assert_ne!(b, a);
    }
    assert!(BN_EPSILON > 0.0);
}

#[test]
fn full_atlas_slicing_has_28_windows() {
    let w = slice_sequence(116, 8, 4).unwrap();
    assert_eq!(w.len(), 28);
    assert_eq!(w[0], 0..8);
    assert_eq!(w[27], 108..116);
    let m = model(&ModelConfig::assrnn(8, 4), 26);
    assert_eq!(m.classify_forward(&random(&[2, 116, 20], 27)).unwrap().shape(), [2, 2]);
}

#[test]
fn checkpoint_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut m = model(&ModelConfig::assrnn(3, 2), 28);
    perturb_running_stats(&mut m, 70);
    save_checkpoint(&path, &m, 28, &[4, 1, 7, 2]).unwrap();
    let (loaded, header) = load_checkpoint(&path).unwrap();
    assert_eq!(header.roi_order, vec![4, 1, 7, 2]);
    assert_eq!(header.config, *m.config());
    let x = random(&[3, 4, 24], 29);
    assert_eq!(m.classify_forward(&x).unwrap(), loaded.classify_forward(&x).unwrap());
}

/// Windows written out directly from the definition: `s * w .. s * w + l`
/// for `s < ceil((n - l) / w)`, then the tail `n - l .. n`.
fn brute_force_windows(n: usize, l: usize, w: usize) -> Vec<(usize, usize)> {
    let regular = (n - l).div_ceil(w);
    let mut out = Vec::new();
    for s in 0..regular {
        out.push((s * w, s * w + l));
    }
    out.push((n - l, n));
    out
}

#[test]
fn slicing_matches_brute_force_exhaustively() {
    for n in 1..=24 {
        for l in 1..=n {
            for w in 1..=l {
                let got: Vec<(usize, usize)> = slice_sequence(n, l, w).unwrap().into_iter().map(|r| (r.start, r.end)).collect();
                let want = brute_force_windows(n, l, w);
                assert_eq!(got, want, "n={n} l={l} w={w}");
                assert_eq!(got.len(), (n - l).div_ceil(w) + 1);
            }
        }
    }
}

proptest! {
    #[test]
    fn slicing_covers_every_roi(n in 1usize..200, l_frac in 0.0f64..1.0, w_frac in 0.0f64..1.0) {
        let l = 1 + ((n - 1) as f64 * l_frac) as usize;
        let w = 1 + ((l - 1) as f64 * w_frac) as usize;
        let windows = slice_sequence(n, l, w).unwrap();
        let mut covered = vec![false; n];
        for r in &windows {
            prop_assert_eq!(r.len(), l);
            prop_assert!(r.end <= n);
            covered[r.clone()].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn invalid_slicing_rejected(n in 1usize..30, l in 1usize..40, w in 1usize..40) {
        let ok = w <= l && l <= n;
        prop_assert_eq!(slice_sequence(n, l, w).is_ok(), ok);
        if !ok {
            prop_assert!(matches!(slice_sequence(n, l, w), Err(Error::InvalidSlicing(_))));
        }
    }
}
