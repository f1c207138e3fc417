//! Train a model on every subject, save it, reload it, and confirm the
//! reloaded model makes identical predictions.
//!
//! Run with `cargo run --release --example checkpoint`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roiranknet::data::{gen_synthetic, SubjectRecord, SyntheticSpec};
use roiranknet::harness::{predict, train, TrainConfig};
use roiranknet::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig};

fn main() -> roiranknet::Result<()> {
    let manifest = gen_synthetic(&SyntheticSpec {
        n_sites: 2,
        subjects_per_site_per_class: 8,
        n_rois: 6,
        planted_rois: vec![4],
        ..SyntheticSpec::default()
    })?;
    let records: Vec<&SubjectRecord> = manifest.records().iter().collect();
    let rois = [4, 0, 2];
    let config = TrainConfig { learning_rate: 1e-3, epochs: 20, batch_size: 8, ..TrainConfig::default() };
    let model = build_model(&ModelConfig::asdrnn(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let (model, losses) = train(model, &records, &rois, &config)?;
    println!("{} steps, final loss {:.4}", losses.len(), losses.last().unwrap());

    let path = std::env::temp_dir().join("roiranknet-example.ckpt");
    save_checkpoint(&path, &model, config.seed, &rois)?;
    let (loaded, header) = load_checkpoint(&path)?;
    println!("reloaded {} with ROI order {:?}", header.config.variant, header.roi_order);
    let before = predict(&model, &records, &rois)?;
    let after = predict(&loaded, &records, &header.roi_order)?;
    assert_eq!(before, after);
    let correct = after.iter().zip(&records).filter(|(p, r)| **p == r.label).count();
    println!("training-set accuracy {correct}/{}", records.len());
    Ok(())
}
