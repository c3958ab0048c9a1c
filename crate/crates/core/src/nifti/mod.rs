//! Single-file NIfTI-1 reading and writing, and central-slice PNG export.

mod header;
mod slices;

use std::path::Path;

use thiserror::Error;

pub use header::{read_nifti, write_nifti, NiftiHeader, HEADER_SIZE, VOX_OFFSET};
pub use slices::{encode_png, export_central_slices, write_slice_pngs, SliceImage, SliceTriplet, View};

use crate::model::VolumeError;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("file shorter than the 348-byte header")]
    TruncatedHeader,
    #[error("sizeof_hdr is {0}, expected 348")]
    BadHeaderSize(i32),
    #[error("big-endian NIfTI files are not supported")]
    BigEndian,
    #[error("bad magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("bitpix {bitpix} inconsistent with datatype {datatype}")]
    BitpixMismatch { datatype: i16, bitpix: i16 },
    #[error("unsupported dimensions {0:?}")]
    UnsupportedDims([i16; 8]),
    #[error("vox_offset {0} is not a valid payload offset")]
    BadVoxOffset(f32),
    #[error("payload holds {found} bytes, dimensions need {expected}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("dimensions {0:?} exceed the 16-bit header field")]
    DimensionOverflow([usize; 3]),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("png encoding: {0}")]
    Png(String),
}

pub fn read_nifti_file(path: &Path) -> Result<crate::model::Volume, NiftiError> {
    let bytes = std::fs::read(path).map_err(|source| NiftiError::Io { path: path.display().to_string(), source })?;
    read_nifti(&bytes)
}

pub fn write_nifti_file(volume: &crate::model::Volume, path: &Path) -> Result<(), NiftiError> {
    let bytes = write_nifti(volume)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|source| NiftiError::Io { path: parent.display().to_string(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| NiftiError::Io { path: path.display().to_string(), source })
}
