use serde::Serialize;
use thiserror::Error;

/// An error reported to the caller as `{"error": {"kind": ..., "message": ...}}`.
#[derive(Debug, Error, Serialize)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

macro_rules! from_core {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e.to_string())
            }
        })*
    };
}

from_core! {
    brainqc::annotation::AnnotationError => "annotation",
    brainqc::cnn::CnnError => "cnn",
    brainqc::cohort::CohortError => "cohort",
    brainqc::eval::EvalError => "eval",
    brainqc::model::LabelError => "label",
    brainqc::model::VolumeError => "volume",
    brainqc::nifti::NiftiError => "nifti",
    brainqc::phantom::PhantomError => "phantom",
    brainqc::preprocess::PreprocessError => "preprocess",
    serde_json::Error => "json",
}
