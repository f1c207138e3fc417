//! Separate-channel CNN/RNN classifiers for region-of-interest (ROI) time
//! series, together with the experiment protocol that ranks ROIs by how
//! well each one alone supports classification under leave-one-site-out
//! cross-validation.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: a small reverse-mode engine (convolution, batch norm,
//!   LSTM, attention scores, cross-entropy, Adam) plus a finite-difference
//!   gradient checker.
//! * [`model`]: the four architectures behind one [`model::ModelConfig`].
//! * [`data`]: manifests, series files, validation, site folds, balanced
//!   batches, and a synthetic generator with planted discriminative ROIs.
//! * [`harness`]: training, evaluation, ranking, top-k sweeps, model
//!   comparison, and report export.
//! * [`cli`]: the `roiranknet` command line.

pub mod autodiff;
pub mod cli;
pub mod data;
mod error;
pub mod harness;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
