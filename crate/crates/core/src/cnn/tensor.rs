use serde::{Deserialize, Serialize};

use super::real::Real;
use super::CnnError;
use crate::model::Volume;

/// Channel count plus spatial extent of one sample. Flat feature vectors use
/// `spatial = [1, 1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub spatial: [usize; 3],
}

impl Shape {
    pub fn new(channels: usize, spatial: [usize; 3]) -> Self {
        Self { channels, spatial }
    }

    pub fn flat(features: usize) -> Self {
        Self { channels: features, spatial: [1, 1, 1] }
    }

    pub fn voxels(&self) -> usize {
        self.spatial.iter().product()
    }

    pub fn len(&self) -> usize {
        self.channels * self.voxels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [x, y, z] = self.spatial;
        write!(f, "{}x{}x{}x{}", self.channels, x, y, z)
    }
}

/// One sample: `channels x dx x dy x dz`, z fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Real> Tensor4<F> {
    pub fn new(shape: Shape, data: Vec<F>) -> Result<Self, CnnError> {
        if data.len() != shape.len() || shape.is_empty() {
            return Err(CnnError::ShapeMismatch { expected: shape, found: format!("{} values", data.len()) });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CnnError::NonFinite("input tensor"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![F::zero(); shape.len()] }
    }

    /// Single-channel tensor holding a volume's scalars.
    pub fn from_volume(v: &Volume) -> Self {
        Self { shape: Shape::new(1, v.dims()), data: v.data().iter().map(|&x| F::of(x as f64)).collect() }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }
}

/// A contiguous batch of `n` samples sharing one shape.
#[derive(Debug, Clone)]
pub(crate) struct Batch<F> {
    pub n: usize,
    pub shape: Shape,
    pub data: Vec<F>,
}

impl<F: Real> Batch<F> {
    pub fn zeros(n: usize, shape: Shape) -> Self {
        Self { n, shape, data: vec![F::zero(); n * shape.len()] }
    }

    pub fn stack(samples: &[&Tensor4<F>], expected: Shape) -> Result<Self, CnnError> {
        let mut data = Vec::with_capacity(samples.len() * expected.len());
        for s in samples {
            if s.shape != expected {
                return Err(CnnError::ShapeMismatch { expected, found: s.shape.to_string() });
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Self { n: samples.len(), shape: expected, data })
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let len = self.shape.len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [F] {
        let len = self.shape.len();
        &mut self.data[i * len..(i + 1) * len]
    }
}
