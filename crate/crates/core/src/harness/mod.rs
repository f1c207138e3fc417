//! Training, evaluation, and the ROI-selection experiment protocols.

mod config;
mod protocol;
mod report;
mod train;

pub use config::{
    TrainConfig, CONFIG_KEYS, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_L2_FACTOR, DEFAULT_LEARNING_RATE,
};
pub use protocol::{
    evenly_spaced_rois, fold_seed, loso_accuracy, loso_accuracy_repeated, model_comparison, rank_single_roi,
    topk_sweep, Direction,
};
pub use report::{
    export_report, model_label, parse_plotdata, reference_for, ComparisonEntry, ComparisonResult, EvalReport,
    PlotData, RankingResult, ReferenceTarget, Report, ReportFormat, RoiAccuracy, SeedResult, SiteAccuracy,
    SweepPoint, SweepResult, ADHD200_REFERENCE,
};
pub use train::{assemble_batch, evaluate_fold, predict, train};
