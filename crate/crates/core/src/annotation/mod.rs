//! Two-rater annotation bookkeeping: an append-only log of submissions, per-rater
//! work queues, consensus with an adjudication queue for straight-reject
//! disagreements, and label export.

mod store;

use thiserror::Error;

use crate::model::LabelError;

pub use store::{
    AnnotationStore, ConsensusOutcome, ConsensusTally, ExportStatus, ExportedLabel, LogEvent, ProgressSummary,
    RaterProgress, StoredAnnotation,
};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown rater {0}")]
    UnknownRater(String),
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error(transparent)]
    ValidationFailed(#[from] LabelError),
    #[error("image {image_id} has {annotations} of the 2 annotations needed for consensus")]
    NotReady { image_id: String, annotations: usize },
    #[error("raters agree on straight reject for image {0}; nothing to resolve")]
    NoDisagreement(String),
    #[error("invalid store configuration: {0}")]
    InvalidConfig(String),
    #[error("annotation log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
