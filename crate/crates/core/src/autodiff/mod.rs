//! Reverse-mode differentiation engine with the layers, loss, initializer,
//! and optimizer used by the classifier family.

pub mod functional;
pub mod gradcheck;
mod graph;
pub mod init;
pub mod layers;
pub mod optim;
mod tensor;

pub use graph::{BatchMoments, Gradients, Graph, NormStats, Var};
pub(crate) use graph::softmax_in_place;
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport, Probe};
pub use init::xavier_init;
pub use layers::{batch_norm1d, bilstm, LstmVars, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use optim::{adam_step, AdamState, ParamStore, Parameter};
pub use tensor::Tensor;

/// Negative-side slope of every leaky ReLU in the model family.
pub const LEAKY_SLOPE: f64 = 0.1;
