//! Online surgical-phase recognition from per-frame spatial features with a
//! long-short spatiotemporal attention aggregator.

pub mod baseline;
pub mod loss;
pub mod model;
pub mod stream;
pub mod tape;
pub mod train;
pub mod weights;

use std::path::PathBuf;

pub use baseline::LinearClassifier;
pub use loss::{inverse_freq_weights, phase_ce_loss, seg_hybrid_loss, sf_loss, weighted_ce_loss, SegCeForm};
pub use model::{BlockOutput, LsSat, LsSatConfig, SelfStack};
pub use tape::Mask;
pub use stream::StreamState;
pub use train::{train_toy, Adam, LabeledSequence, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum LsSatError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { what: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("class {0} has no training frames")]
    EmptyClass(usize),
    #[error("label {label} out of range for {phases} phases")]
    LabelOutOfRange { label: usize, phases: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite input")]
    NonFinite,
    #[error("loss diverged at epoch {epoch}, sequence {sequence}")]
    DivergenceDetected { epoch: usize, sequence: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

pub(crate) fn shape_err(what: &str, expected: &[usize], got: &[usize]) -> LsSatError {
    LsSatError::ShapeMismatch { what: what.into(), expected: expected.to_vec(), got: got.to_vec() }
}
