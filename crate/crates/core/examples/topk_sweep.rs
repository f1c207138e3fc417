//! Grow the ROI subset from the best-ranked ROI and, separately, from the
//! worst-ranked one, and compare the two accuracy curves.
//!
//! Run with `cargo run --release --example topk_sweep`.

use roiranknet::data::{gen_synthetic, SyntheticSpec};
use roiranknet::harness::{rank_single_roi, topk_sweep, Direction, TrainConfig};

fn main() -> roiranknet::Result<()> {
    let manifest = gen_synthetic(&SyntheticSpec {
        subjects_per_site_per_class: 24,
        n_rois: 10,
        planted_rois: vec![3, 8],
        ..SyntheticSpec::default()
    })?;
    let config = TrainConfig { learning_rate: 1e-3, epochs: 10, batch_size: 16, ..TrainConfig::default() };
    let ranking = rank_single_roi(&manifest, &config, &(0..10).collect::<Vec<_>>())?;
    println!("ranking: {:?}", ranking.rank_order);
    let top = topk_sweep(&manifest, &ranking, 4, &config, Direction::Top)?;
    let reverse = topk_sweep(&manifest, &ranking, 4, &config, Direction::Reverse)?;
    println!("{:>3} {:>8} {:>8}", "k", "top", "reverse");
    for k in 1..=4 {
        println!("{k:>3} {:>8.3} {:>8.3}", top.accuracy_at(k).unwrap(), reverse.accuracy_at(k).unwrap());
    }
    Ok(())
}
