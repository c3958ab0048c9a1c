use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NiftiError;
use crate::model::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Axial,
    Coronal,
    Sagittal,
}

impl View {
    pub const ALL: [View; 3] = [View::Axial, View::Coronal, View::Sagittal];

    pub fn name(self) -> &'static str {
        match self {
            View::Axial => "axial",
            View::Coronal => "coronal",
            View::Sagittal => "sagittal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// 8-bit grayscale image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl SliceImage {
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceTriplet {
    pub axial: SliceImage,
    pub coronal: SliceImage,
    pub sagittal: SliceImage,
}

impl SliceTriplet {
    pub fn view(&self, view: View) -> &SliceImage {
        match view {
            View::Axial => &self.axial,
            View::Coronal => &self.coronal,
            View::Sagittal => &self.sagittal,
        }
    }
}

/// Min-max windows `values` (width-major within each row) to 0..=255; constant input maps to 0.
fn window(width: usize, height: usize, values: Vec<f32>) -> SliceImage {
    let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi as f64 - lo as f64;
    let pixels = values
        .iter()
        .map(|&v| if range > 0.0 { ((v as f64 - lo as f64) / range * 255.0).round() as u8 } else { 0 })
        .collect();
    SliceImage { width, height, pixels }
}

/// Central slice of each axis at index `floor(dim / 2)`.
///
/// Axial images span x (columns) by y (rows), coronal x by z, sagittal y by z;
/// the row axis is flipped so higher coordinates appear at the top.
pub fn export_central_slices(v: &Volume) -> SliceTriplet {
    let [nx, ny, nz] = v.dims();
    let (cx, cy, cz) = (nx / 2, ny / 2, nz / 2);
    let plane = |w: usize, h: usize, f: &dyn Fn(usize, usize) -> f32| {
        let mut vals = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                vals.push(f(col, h - 1 - row));
            }
        }
        window(w, h, vals)
    };
    SliceTriplet {
        axial: plane(nx, ny, &|x, y| v.get(x, y, cz)),
        coronal: plane(nx, nz, &|x, z| v.get(x, cy, z)),
        sagittal: plane(ny, nz, &|y, z| v.get(cx, y, z)),
    }
}

/// 8-bit grayscale, non-interlaced PNG.
pub fn encode_png(img: &SliceImage) -> Result<Vec<u8>, NiftiError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| NiftiError::Png(e.to_string()))?;
        writer.write_image_data(&img.pixels).map_err(|e| NiftiError::Png(e.to_string()))?;
        writer.finish().map_err(|e| NiftiError::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Writes `<image_id>_{axial|coronal|sagittal}.png` into `dir`.
pub fn write_slice_pngs(dir: &Path, image_id: &str, slices: &SliceTriplet) -> Result<Vec<PathBuf>, NiftiError> {
    std::fs::create_dir_all(dir).map_err(|source| NiftiError::Io { path: dir.display().to_string(), source })?;
    View::ALL
        .iter()
        .map(|&view| {
            let path = dir.join(format!("{image_id}_{}.png", view.name()));
            let bytes = encode_png(slices.view(view))?;
            std::fs::write(&path, bytes)
                .map_err(|source| NiftiError::Io { path: path.display().to_string(), source })?;
            Ok(path)
        })
        .collect()
}
