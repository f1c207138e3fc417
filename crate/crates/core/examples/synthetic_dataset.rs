//! Generate a multi-site synthetic dataset, write it to disk, reload and
//! validate it, and list the leave-one-site-out folds.
//!
//! Run with `cargo run --release --example synthetic_dataset [OUT_DIR]`.

use std::path::PathBuf;

use roiranknet::data::{gen_synthetic, load_manifest, loso_split, validate_dataset, write_manifest, SyntheticSpec};

fn main() -> roiranknet::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("roiranknet-synthetic"), PathBuf::from);
    let spec = SyntheticSpec { n_sites: 3, subjects_per_site_per_class: 10, ..SyntheticSpec::default() };
    let manifest = gen_synthetic(&spec)?;
    let path = write_manifest(&manifest, &out)?;
    println!("wrote {} subjects ({} ROIs x {} samples) to {}", manifest.len(), manifest.n_rois(), spec.time_len, path.display());

    let reloaded = load_manifest(&path)?;
    assert_eq!(reloaded, manifest);
    let report = validate_dataset(&reloaded);
    println!("validation: {} violations", report.violations.len());

    for fold in loso_split(&reloaded)? {
        let counts = reloaded.site_counts(&fold.test_site).unwrap();
        println!(
            "hold out {:<6} train {:>3}  test {:>3} ({} ADHD / {} HC)",
            fold.test_site,
            fold.train.len(),
            fold.test.len(),
            counts.adhd,
            counts.hc
        );
    }
    Ok(())
}
