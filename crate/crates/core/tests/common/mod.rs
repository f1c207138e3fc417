//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roiranknet::autodiff::{grad_check_sampled, GradCheckReport, Tensor};
use roiranknet::data::{gen_synthetic, Manifest, SyntheticSpec};
use roiranknet::harness::{evenly_spaced_rois, TrainConfig};
use roiranknet::model::{build_model, Mode, ModelConfig};

/// Gradients smaller than this are dominated by the ~1e-11 roundoff of a
/// central difference on an O(1) loss; they are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_ABS_TOL: f64 = 1e-9;
pub const GRAD_REL_TOL: f64 = 1e-4;

pub const PLANTED: [usize; 3] = [5, 40, 99];

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// The four variants as exercised end to end on 4-ROI inputs; slicing uses
/// windows of 2 with step 1 so that several segments exist.
pub fn small_variants() -> Vec<ModelConfig> {
    vec![
        ModelConfig::sccnn_rnn(),
        ModelConfig::ascrnn(),
        ModelConfig::asdrnn(),
        ModelConfig::assrnn(2, 1),
    ]
}

/// Training-mode forward pass plus cross-entropy on a 2-subject, 4-ROI,
/// T = 24 batch, differentiated with respect to every parameter and the
/// input, probing at most `per_tensor` elements of each.
pub fn end_to_end_grad_check(config: &ModelConfig, per_tensor: usize) -> GradCheckReport {
    let model = build_model(config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut inputs: Vec<Tensor> = model.params().iter().map(|p| p.tensor.clone()).collect();
    let n = inputs.len();
    inputs.push(random(&[2, 4, 24], 2));
    grad_check_sampled(
        |g, v| {
            let out = model.forward_var(g, &v[..n], v[n], Mode::Train)?;
            g.softmax_cross_entropy(out.logits, &[0, 1])
        },
        &inputs,
        1e-5,
        per_tensor,
        3,
    )
    .unwrap()
}

/// Passes when gradients above the floor agree relatively and those below
/// it agree absolutely.
pub fn grad_report_ok(r: &GradCheckReport) -> bool {
    r.max_rel_error_above(GRAD_FLOOR) < GRAD_REL_TOL
        && r.max_abs_error_below(GRAD_FLOOR) < GRAD_ABS_TOL
        && r.kink_skips * 10 < r.probes.len()
}

/// Three sites with 40 subjects per class each, 116 ROIs, T = 32.
pub fn planted_manifest(seed: u64, effect: f64) -> Manifest {
    gen_synthetic(&SyntheticSpec {
        n_sites: 3,
        subjects_per_site_per_class: 40,
        time_len: 32,
        n_rois: 116,
        planted_rois: PLANTED.to_vec(),
        effect_strength: effect,
        site_shift_scale: 1.0,
        seed,
    })
    .unwrap()
}

/// Reduced atlas: the planted ROIs plus 26 evenly spaced decoys.
pub fn reduced_candidates() -> Vec<usize> {
    let mut c: Vec<usize> = evenly_spaced_rois(116, 29)
        .unwrap()
        .into_iter()
        .filter(|r| !PLANTED.contains(r))
        .take(26)
        .collect();
    c.extend(PLANTED);
    c.sort_unstable();
    c
}

/// Desk-scale training settings for the protocol checks.
pub fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs: 10,
        seed,
        ..TrainConfig::default()
    }
}
