//! Finite-difference check of a full forward pass for each architecture.
//!
//! Run with `cargo run --release --example gradient_check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roiranknet::autodiff::{grad_check_sampled, Tensor};
use roiranknet::model::{build_model, Mode, ModelConfig};

fn main() -> roiranknet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = Tensor::new(&[2, 4, 24], (0..2 * 4 * 24).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let configs = [ModelConfig::sccnn_rnn(), ModelConfig::ascrnn(), ModelConfig::asdrnn(), ModelConfig::assrnn(2, 1)];
    for config in configs {
        let model = build_model(&config, &mut ChaCha8Rng::seed_from_u64(1))?;
        let mut inputs: Vec<Tensor> = model.params().iter().map(|p| p.tensor.clone()).collect();
        let n = inputs.len();
        inputs.push(batch.clone());
        let report = grad_check_sampled(
            |g, v| {
                let out = model.forward_var(g, &v[..n], v[n], Mode::Train)?;
                g.softmax_cross_entropy(out.logits, &[0, 1])
            },
            &inputs,
            1e-5,
            4,
            3,
        )?;
        println!(
            "{:<10} {:>4} probes  max rel (|grad| > 1e-6) {:.2e}  max abs (below) {:.2e}  kink skips {}",
            config.variant.to_string(),
            report.probes.len(),
            report.max_rel_error_above(1e-6),
            report.max_abs_error_below(1e-6),
            report.kink_skips
        );
    }
    Ok(())
}
