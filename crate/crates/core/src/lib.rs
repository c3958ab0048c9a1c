//! Automatic quality control for 3D T1-weighted brain MRI.

pub mod annotation;
pub mod cnn;
pub mod cohort;
pub mod eval;
pub mod model;
pub mod nifti;
pub mod phantom;
pub mod preprocess;
