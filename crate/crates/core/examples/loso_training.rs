//! Leave-one-site-out evaluation of one ROI subset, repeated over seeds.
//!
//! Run with `cargo run --release --example loso_training`.

use roiranknet::data::{gen_synthetic, SyntheticSpec};
use roiranknet::harness::{loso_accuracy_repeated, Report, TrainConfig};

fn main() -> roiranknet::Result<()> {
    let manifest = gen_synthetic(&SyntheticSpec {
        n_sites: 3,
        subjects_per_site_per_class: 12,
        n_rois: 8,
        planted_rois: vec![2, 5],
        ..SyntheticSpec::default()
    })?;
    let config = TrainConfig { learning_rate: 1e-3, batch_size: 8, epochs: 8, ..TrainConfig::default() };
    let informative = loso_accuracy_repeated(&manifest, &[2, 5], &config, &[0, 1])?;
    let uninformative = loso_accuracy_repeated(&manifest, &[0, 7], &config, &[0, 1])?;
    print!("{}", Report::from(informative).table());
    println!();
    print!("{}", Report::from(uninformative).table());
    Ok(())
}
