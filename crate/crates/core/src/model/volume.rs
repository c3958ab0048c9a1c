use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("volume dimensions must all be >= 1, got {0:?}")]
    EmptyDimension([usize; 3]),
    #[error("voxel spacing must be strictly positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("data length {len} does not match dimensions {dims:?}")]
    LengthMismatch { len: usize, dims: [usize; 3] },
    #[error("non-finite scalar at flat index {0}")]
    NonFinite(usize),
}

/// A 3D scalar grid, x-major with z varying fastest.
///
/// Flat index of voxel `(x, y, z)` is `(x * dy + y) * dz + z`. Spacing is in
/// millimetres per voxel along each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f32>,
    affine: Option<[[f64; 4]; 4]>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDimension(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::LengthMismatch { len: data.len(), dims });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self { dims, spacing, data, affine: None })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f32) -> Result<Self, VolumeError> {
        let len = dims.iter().product();
        Self::new(dims, spacing, vec![value; len])
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, VolumeError> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn with_affine(mut self, affine: Option<[[f64; 4]; 4]>) -> Self {
        self.affine = affine;
        self
    }

    /// Same geometry, new scalars. Panics if the length differs; callers
    /// derive `data` from `self`.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), self.data.len());
        Self { dims: self.dims, spacing: self.spacing, data, affine: self.affine }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> Option<&[[f64; 4]; 4]> {
        self.affine.as_ref()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Value at a signed index with nearest-edge clamping.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, z: isize) -> f32 {
        let c = |v: isize, d: usize| v.clamp(0, d as isize - 1) as usize;
        self.get(c(x, self.dims[0]), c(y, self.dims[1]), c(z, self.dims[2]))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Physical extent (mm) covered by the voxel centres' grid.
    pub fn extent_mm(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.dims[a] as f64 * self.spacing[a])
    }

    pub fn center_index(&self) -> [usize; 3] {
        self.dims.map(|d| d / 2)
    }

    pub(crate) fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_geometry() {
        assert!(matches!(Volume::new([0, 2, 2], [1.0; 3], vec![]), Err(VolumeError::EmptyDimension(_))));
        assert!(matches!(Volume::new([1, 1, 1], [1.0, 0.0, 1.0], vec![0.0]), Err(VolumeError::BadSpacing(_))));
        assert!(matches!(Volume::new([2, 1, 1], [1.0; 3], vec![0.0]), Err(VolumeError::LengthMismatch { .. })));
        assert_eq!(Volume::new([2, 1, 1], [1.0; 3], vec![0.0, f32::NAN]), Err(VolumeError::NonFinite(1)));
    }

    #[test]
    fn indexing_is_z_fastest() {
        let v = Volume::from_fn([2, 3, 4], [1.0; 3], |x, y, z| (x * 100 + y * 10 + z) as f32).unwrap();
        assert_eq!(v.data()[1], 1.0);
        assert_eq!(v.data()[4], 10.0);
        assert_eq!(v.get(1, 2, 3), 123.0);
        assert_eq!(v.get_clamped(-5, 9, 2), 22.0);
    }
}
