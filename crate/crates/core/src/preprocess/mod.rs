//! Geometry normalisation for network input: isotropic resampling, affine
//! alignment to a reference, min-max rescaling and centre crop/pad.

mod affine;
mod register;
mod resample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affine::{AffineMap, AffineParams, Mat3};
pub use register::{
    apply_affine, mean_corner_displacement, register_affine, LevelTrace, Registration, RegistrationConfig,
};
pub use resample::{
    crop_or_pad, resample_isotropic, rescale_minmax, sample, sample_cubic, sample_trilinear, sample_trilinear_grad,
    Interpolation,
};

use crate::model::Volume;

pub const DEFAULT_TARGET_SHAPE: [usize; 3] = [169, 208, 179];

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("{0} volume is constant")]
    ConstantVolume(&'static str),
    #[error("registration requested without a reference volume")]
    MissingReference,
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_spacing: f64,
    pub target_shape: [usize; 3],
    pub interpolation: Interpolation,
    pub do_registration: bool,
    /// When set, volumes are resampled only if some voxel dimension is below
    /// this many millimetres; otherwise every volume is resampled.
    pub resample_below_mm: Option<f64>,
    pub registration: RegistrationConfig,
    #[serde(skip)]
    pub reference: Option<Volume>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_spacing: 1.0,
            target_shape: DEFAULT_TARGET_SHAPE,
            interpolation: Interpolation::Trilinear,
            do_registration: false,
            resample_below_mm: None,
            registration: RegistrationConfig::default(),
            reference: None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.target_spacing.is_finite() && self.target_spacing > 0.0) {
            return Err(PreprocessError::InvalidConfig(format!("target_spacing {}", self.target_spacing)));
        }
        if self.target_shape.contains(&0) {
            return Err(PreprocessError::InvalidConfig(format!("target_shape {:?}", self.target_shape)));
        }
        if self.do_registration && self.reference.is_none() {
            return Err(PreprocessError::MissingReference);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub volume: Volume,
    pub registration: Option<AffineParams>,
    pub non_convergence: bool,
}

/// Resample, optionally register, rescale to [0, 1], then crop or pad to the target shape.
pub fn preprocess_pipeline(v: &Volume, cfg: &PreprocessConfig) -> Result<Preprocessed, PreprocessError> {
    cfg.validate()?;
    let needs_resampling = match cfg.resample_below_mm {
        Some(limit) => v.spacing().iter().any(|&s| s < limit),
        None => true,
    };
    let mut current =
        if needs_resampling { resample_isotropic(v, cfg.target_spacing, cfg.interpolation) } else { v.clone() };
    let mut registration = None;
    let mut non_convergence = false;
    if cfg.do_registration {
        let reference = cfg.reference.as_ref().ok_or(PreprocessError::MissingReference)?;
        let (lo, hi) = current.min_max();
        // A constant volume has nothing to align; it rescales to zeros below.
        if lo < hi {
            let r = register_affine(&current, reference, &cfg.registration)?;
            registration = Some(r.params);
            non_convergence = r.non_convergence;
            current = r.registered;
        }
    }
    let rescaled = rescale_minmax(&current);
    Ok(Preprocessed { volume: crop_or_pad(&rescaled, cfg.target_shape), registration, non_convergence })
}
