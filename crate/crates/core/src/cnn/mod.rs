//! A from-scratch 3D convolutional classifier: layers, backpropagation, Adam,
//! the training loop with early stopping, and cross-validation.

mod adam;
pub mod checkpoint;
mod cv;
pub mod gradcheck;
mod layers;
mod loss;
mod network;
mod real;
mod spec;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cv::{
    evaluate_model, learning_curve, run_cross_validation, subsample_patients, CrossValidationResult, CurvePoint,
    LearningCurveConfig,
};
pub use loss::{batch_loss_and_grad, inverse_frequency_weights, softmax, weighted_cross_entropy};
pub use network::{ForwardPass, Mode, Network, ParamSegment};
pub use real::Real;
pub use spec::{pooled_extent, LayerSpec, NetworkSpec};
pub use tensor::{Shape, Tensor4};
pub use train::{predict, train_fold, EpochRecord, LabeledVolume, Prediction, TaskDataset, TrainConfig, TrainedModel};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: String },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("forward pass is stale or was not run in training mode")]
    StaleCache,
    #[error("labels do not match the batch or the class count")]
    LabelMismatch,
    #[error("batch norm needs at least 2 samples per training batch, got {0}")]
    BatchTooSmall(usize),
    #[error("fold {0} has no training or validation images")]
    EmptyFold(usize),
    #[error("training set of fold {0} contains a single class")]
    DegenerateLabels(usize),
    #[error("requested training size {requested} exceeds available {available}")]
    SizeTooLarge { requested: usize, available: usize },
    #[error("image {0} has no label for this task")]
    MissingLabel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}
