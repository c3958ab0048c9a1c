//! Synthetic head phantoms with artifacts injected at known grades, used as
//! labelled training and test data.

mod anatomy;
mod artifacts;
mod dataset;

use thiserror::Error;

pub use anatomy::{generate_phantom, HeadGeometry, PhantomSpec, TissueIntensities, MIN_EXTENT};
pub use artifacts::{
    edge_energy, gadolinium_mask, inject_contrast_loss, inject_gadolinium, inject_gadolinium_with, inject_motion,
    inject_noise, make_sr_variant, SrMode, CONTRAST_LOSS_PER_GRADE, GADOLINIUM_INTENSITY, MOTION_GHOSTS, NOISE_SIGMA,
};
pub use dataset::{
    generate_labeled_dataset, render_sample, sample_grades, synthetic_record, write_dataset, ArtifactSpec, ClassMix,
    DatasetConfig, PhantomSample,
};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("phantom shape {0:?} has an axis shorter than 8 voxels")]
    ShapeTooSmall([usize; 3]),
    #[error("class proportions {0:?} must be non-negative and sum to 1")]
    InvalidMix([f64; 4]),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Volume(#[from] crate::model::VolumeError),
    #[error("writing dataset: {0}")]
    Io(String),
}
