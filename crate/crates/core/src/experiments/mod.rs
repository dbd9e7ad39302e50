//! End-to-end orchestration: synthetic data, splits, the summarize→match
//! pipeline, the document-count ablation and checkpoint persistence.

pub mod checkpoint;
mod pipeline;
pub mod synthetic;

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, save_checkpoint, CheckpointError, Checkpointable};
pub use pipeline::*;
pub use synthetic::{generate_synthetic_dataset, SyntheticConfig, SyntheticDataset};

use crate::embeddings::EmbeddingError;
use crate::matcher::MatcherError;
use crate::metrics::MetricsError;
use crate::summarizer::SummarizerError;
use crate::text::TextError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameters yield no positive pairs")]
    NoPositives,
    #[error("entity {0:?} not found in the corpus")]
    UnknownEntity(String),
    #[error("summarizer and embedding vocabularies differ")]
    VocabularyMismatch,
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        source: Box<ExperimentError>,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Name of the innermost failing stage, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Self::Stage { stage, source } => source.stage().or(Some(stage)),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Seed for a named sub-stream of `master`; stable across platforms.
pub fn child_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
