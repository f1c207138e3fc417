use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("sequence too short: length {length} but at least {required} samples needed")]
    SequenceTooShort { length: usize, required: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("invalid label {0}: expected 0 or 1")]
    InvalidLabel(usize),
    #[error("optimizer state: {0}")]
    OptimizerState(String),
    #[error("gradient oracle invalid: {0}")]
    OracleInvalid(String),
    #[error("model config: {0}")]
    Config(String),
    #[error("invalid slicing: {0}")]
    InvalidSlicing(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("validation failed for subject {subject}: {message}")]
    Validation { subject: String, message: String },
    #[error("split: {0}")]
    Split(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("class absent: {0}")]
    ClassAbsent(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("experiment config: {0}")]
    ExperimentConfig(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by input data rather than by the computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Load { .. }
                | Error::EmptyDataset
                | Error::Validation { .. }
                | Error::Split(_)
                | Error::ClassAbsent(_)
                | Error::Sampling(_)
        )
    }
}
