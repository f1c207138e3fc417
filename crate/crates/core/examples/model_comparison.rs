//! Compare the four architectures on the top-ranked ROI subsets and write
//! the result in all three report formats.
//!
//! Run with `cargo run --release --example model_comparison [OUT_DIR]`.

use std::path::PathBuf;

use roiranknet::data::{gen_synthetic, SyntheticSpec};
use roiranknet::harness::{export_report, model_comparison, rank_single_roi, Report, ReportFormat, TrainConfig};
use roiranknet::model::ModelConfig;

fn main() -> roiranknet::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let manifest = gen_synthetic(&SyntheticSpec {
        subjects_per_site_per_class: 12,
        n_rois: 8,
        planted_rois: vec![1, 6],
        ..SyntheticSpec::default()
    })?;
    let config = TrainConfig { learning_rate: 1e-3, epochs: 5, batch_size: 8, ..TrainConfig::default() };
    let ranking = rank_single_roi(&manifest, &config, &(0..8).collect::<Vec<_>>())?;
    let variants = [ModelConfig::sccnn_rnn(), ModelConfig::ascrnn(), ModelConfig::asdrnn(), ModelConfig::assrnn(2, 1)];
    let report = Report::from(model_comparison(&manifest, &ranking, &variants, 3, &config)?);
    print!("{}", report.table());
    for format in [ReportFormat::Table, ReportFormat::Plotdata, ReportFormat::Json] {
        let path = out.join(format!("comparison.{}", format.extension()));
        export_report(&report, &path, format)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
