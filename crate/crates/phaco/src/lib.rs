//! Phase-specific AR guidance for cataract surgery: per-frame limbus fit,
//! eye rotation and cue construction, with the command-line surface.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod render;

use std::path::{Path, PathBuf};

pub use config::Config;
pub use manifest::{FrameEntry, Manifest, SessionMeta};
pub use pipeline::{process_frame, run_session, FrameBundle, FrameResult, SessionState, SessionSummary};

#[derive(Debug, thiserror::Error)]
pub enum PhacoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error("{0}: file not found")]
    MissingFile(PathBuf),
    #[error(transparent)]
    File(#[from] phaco_core::io::IoError),
    #[error(transparent)]
    Model(#[from] phaco_lssat::LsSatError),
    #[error("frame {index}: {msg}")]
    Frame { index: usize, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl PhacoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PhacoError::Io { path: path.to_path_buf(), source }
    }

    /// File the error is about, when there is one.
    pub fn path(&self) -> Option<&Path> {
        use phaco_core::io::IoError;
        use phaco_lssat::LsSatError;
        match self {
            PhacoError::Io { path, .. } | PhacoError::Invalid { path, .. } | PhacoError::MissingFile(path) => Some(path),
            PhacoError::File(IoError::Io { path, .. } | IoError::Format { path, .. }) => Some(path),
            PhacoError::Model(LsSatError::Io { path, .. } | LsSatError::Format { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// Stable short name for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            PhacoError::Io { .. } => "io",
            PhacoError::Invalid { .. } => "invalid",
            PhacoError::MissingFile(_) => "missing_file",
            PhacoError::File(_) => "file",
            PhacoError::Model(_) => "model",
            PhacoError::Frame { .. } => "frame",
            PhacoError::Usage(_) => "usage",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "path": self.path().map(|p| p.display().to_string()),
        })
        .to_string()
    }
}
