use super::NiftiError;
use crate::model::Volume;

pub const HEADER_SIZE: usize = 348;
/// Payload offset written by [`write_nifti`]: header plus the 4-byte extension flag.
pub const VOX_OFFSET: usize = 352;

const MAGIC: [u8; 4] = *b"n+1\0";
const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

/// The header fields this crate reads or writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self, NiftiError> {
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::TruncatedHeader);
        }
        let size_le = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if size_le != HEADER_SIZE as i32 {
            let size_be = i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
            return Err(if size_be == HEADER_SIZE as i32 {
                NiftiError::BigEndian
            } else {
                NiftiError::BadHeaderSize(size_le)
            });
        }
        let magic = [bytes[344], bytes[345], bytes[346], bytes[347]];
        if magic != MAGIC {
            return Err(NiftiError::BadMagic(magic));
        }
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = i16_at(bytes, 40 + 2 * i);
            pixdim[i] = f32_at(bytes, 76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(bytes, 280 + 16 * r + 4 * c);
            }
        }
        let header = Self {
            dim,
            datatype: i16_at(bytes, 70),
            bitpix: i16_at(bytes, 72),
            pixdim,
            vox_offset: f32_at(bytes, 108),
            scl_slope: f32_at(bytes, 112),
            scl_inter: f32_at(bytes, 116),
            sform_code: i16_at(bytes, 254),
            srow,
            magic,
        };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<(), NiftiError> {
        let bits = match self.datatype {
            DT_UINT8 => 8,
            DT_INT16 => 16,
            DT_FLOAT32 => 32,
            other => return Err(NiftiError::UnsupportedDatatype(other)),
        };
        if self.bitpix != bits {
            return Err(NiftiError::BitpixMismatch { datatype: self.datatype, bitpix: self.bitpix });
        }
        let n = self.dim[0];
        // A trailing singleton time axis (dim[0] = 4, dim[4] = 1) is accepted as 3D.
        let extra_ok = (4..=n.clamp(3, 7) as usize).all(|i| self.dim[i] == 1);
        if !(3..=7).contains(&n) || !extra_ok || self.dim[1..4].iter().any(|&d| d < 1) {
            return Err(NiftiError::UnsupportedDims(self.dim));
        }
        if !(self.vox_offset.is_finite() && self.vox_offset >= VOX_OFFSET as f32 && self.vox_offset.fract() == 0.0) {
            return Err(NiftiError::BadVoxOffset(self.vox_offset));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    fn bytes_per_voxel(&self) -> usize {
        self.bitpix as usize / 8
    }
}

/// Parses a little-endian single-file NIfTI-1 volume.
///
/// File order is x fastest; the returned volume is re-laid out with z fastest.
/// Spacing comes from `pixdim[1..4]` and the affine from the `srow` rows when
/// `sform_code > 0`.
pub fn read_nifti(bytes: &[u8]) -> Result<Volume, NiftiError> {
    let h = NiftiHeader::parse(bytes)?;
    let [nx, ny, nz] = h.dims();
    let n = nx * ny * nz;
    let bpv = h.bytes_per_voxel();
    let start = h.vox_offset as usize;
    let expected = n * bpv;
    let found = bytes.len().saturating_sub(start);
    if found < expected {
        return Err(NiftiError::TruncatedPayload { expected, found });
    }
    let payload = &bytes[start..start + expected];
    let (slope, inter) = if h.scl_slope != 0.0 && h.scl_slope.is_finite() && h.scl_inter.is_finite() {
        (h.scl_slope, h.scl_inter)
    } else {
        (1.0, 0.0)
    };
    let mut data = vec![0f32; n];
    let mut file_index = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let off = file_index * bpv;
                let raw = match h.datatype {
                    DT_UINT8 => payload[off] as f32,
                    DT_INT16 => i16_at(payload, off) as f32,
                    _ => f32_at(payload, off),
                };
                if !raw.is_finite() {
                    return Err(NiftiError::NonFinite(file_index));
                }
                data[(x * ny + y) * nz + z] = if slope == 1.0 && inter == 0.0 { raw } else { raw * slope + inter };
                file_index += 1;
            }
        }
    }
    let spacing = [h.pixdim[1] as f64, h.pixdim[2] as f64, h.pixdim[3] as f64];
    let affine = (h.sform_code > 0).then(|| {
        let mut a = [[0.0; 4]; 4];
        for r in 0..3 {
            for c in 0..4 {
                a[r][c] = h.srow[r][c] as f64;
            }
        }
        a[3][3] = 1.0;
        a
    });
    Ok(Volume::new([nx, ny, nz], spacing, data)?.with_affine(affine))
}

/// Serializes a volume as float32 NIfTI-1 with `vox_offset` 352 and identity scaling.
pub fn write_nifti(v: &Volume) -> Result<Vec<u8>, NiftiError> {
    let dims = v.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(NiftiError::DimensionOverflow(dims));
    }
    let [nx, ny, nz] = dims;
    let mut out = vec![0u8; VOX_OFFSET + 4 * v.len()];
    let put_i16 = |out: &mut [u8], off: usize, val: i16| out[off..off + 2].copy_from_slice(&val.to_le_bytes());
    let put_f32 = |out: &mut [u8], off: usize, val: f32| out[off..off + 4].copy_from_slice(&val.to_le_bytes());
    out[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    out[38] = b'r';
    for (i, d) in [3, nx, ny, nz, 1, 1, 1, 1].into_iter().enumerate() {
        put_i16(&mut out, 40 + 2 * i, d as i16);
    }
    put_i16(&mut out, 70, DT_FLOAT32);
    put_i16(&mut out, 72, 32);
    let s = v.spacing();
    for (i, p) in [1.0, s[0], s[1], s[2], 1.0, 1.0, 1.0, 1.0].into_iter().enumerate() {
        put_f32(&mut out, 76 + 4 * i, p as f32);
    }
    put_f32(&mut out, 108, VOX_OFFSET as f32);
    put_f32(&mut out, 112, 1.0);
    put_f32(&mut out, 116, 0.0);
    out[123] = 2; // xyzt_units: millimetres
    let srow = match v.affine() {
        Some(a) => {
            put_i16(&mut out, 254, 1);
            [a[0], a[1], a[2]]
        }
        None => [[s[0], 0.0, 0.0, 0.0], [0.0, s[1], 0.0, 0.0], [0.0, 0.0, s[2], 0.0]],
    };
    for (r, row) in srow.iter().enumerate() {
        for (c, &val) in row.iter().enumerate() {
            put_f32(&mut out, 280 + 16 * r + 4 * c, val as f32);
        }
    }
    out[344..348].copy_from_slice(&MAGIC);
    let data = v.data();
    let mut off = VOX_OFFSET;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out[off..off + 4].copy_from_slice(&data[(x * ny + y) * nz + z].to_le_bytes());
                off += 4;
            }
        }
    }
    Ok(out)
}
