//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each exported function takes and returns plain values or JSON strings so
//! the page needs no generated TypeScript types. Failures come back as
//! `{"error": "..."}`.

use brainqc::eval::{weighted_cohens_kappa, RatingPair, Weighting};
use brainqc::model::{consensus_merge, Annotation, Grade, Volume};
use brainqc::nifti::{export_central_slices, View};
use brainqc::phantom::{
    generate_phantom, inject_contrast_loss, inject_gadolinium_with, inject_motion, inject_noise, make_sr_variant,
    PhantomSpec, SrMode,
};
use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn error_json(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

/// Artifact settings chosen in the slice explorer.
#[derive(Debug, Clone, Deserialize)]
pub struct ExplorerRequest {
    pub shape: [usize; 3],
    pub seed: u64,
    pub motion: u8,
    pub contrast: u8,
    pub noise: u8,
    #[serde(default)]
    pub gadolinium: bool,
    /// "truncated" or "segmented".
    #[serde(default)]
    pub sr_mode: Option<String>,
    /// "axial", "coronal" or "sagittal".
    pub view: String,
}

/// Grey-level central slice of a phantom with the requested artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSlice {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn render(req: &ExplorerRequest) -> Result<RenderedSlice, String> {
    let spec = PhantomSpec::new(req.shape, req.seed);
    let t = spec.tissue_intensities;
    let grade = |g: u8| Grade::new(g).map_err(|e| e.to_string());
    let mut v: Volume = generate_phantom(&spec).map_err(|e| e.to_string())?;
    v = inject_contrast_loss(&v, grade(req.contrast)?, t.gm, t.wm);
    v = inject_motion(&v, grade(req.motion)?, req.seed ^ 1);
    v = inject_noise(&v, grade(req.noise)?, req.seed ^ 2);
    if req.gadolinium {
        v = inject_gadolinium_with(&v, spec.ellipsoid_radii_fraction, req.seed ^ 3);
    }
    match req.sr_mode.as_deref() {
        None | Some("") | Some("none") => {}
        Some("truncated") => v = make_sr_variant(&v, SrMode::Truncated, &t, req.seed ^ 4),
        Some("segmented") => v = make_sr_variant(&v, SrMode::Segmented, &t, req.seed ^ 4),
        Some(other) => return Err(format!("unknown sr_mode {other}")),
    }
    let view = View::parse(&req.view).ok_or_else(|| format!("unknown view {}", req.view))?;
    let img = export_central_slices(&v).view(view).clone();
    Ok(RenderedSlice { width: img.width, height: img.height, pixels: img.pixels })
}

/// Renders a slice as RGBA bytes for a canvas `ImageData`, preceded by the
/// width and height as two little-endian u32 values. Returns an empty array
/// on invalid input; call `explore_slice_error` for the message.
#[wasm_bindgen]
pub fn explore_slice(request_json: &str) -> Vec<u8> {
    let Ok(req) = serde_json::from_str::<ExplorerRequest>(request_json) else {
        return Vec::new();
    };
    match render(&req) {
        Ok(img) => {
            let mut out = Vec::with_capacity(8 + img.pixels.len() * 4);
            out.extend_from_slice(&(img.width as u32).to_le_bytes());
            out.extend_from_slice(&(img.height as u32).to_le_bytes());
            for &p in &img.pixels {
                out.extend_from_slice(&[p, p, p, 255]);
            }
            out
        }
        Err(_) => Vec::new(),
    }
}

/// Why `explore_slice` returned nothing, or an empty string.
#[wasm_bindgen]
pub fn explore_slice_error(request_json: &str) -> String {
    match serde_json::from_str::<ExplorerRequest>(request_json) {
        Err(e) => e.to_string(),
        Ok(req) => render(&req).err().unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ConsensusRequest {
    first: Annotation,
    second: Annotation,
    #[serde(default)]
    sr_resolution: Option<bool>,
}

/// Consensus label and tier of two annotations given as JSON.
#[wasm_bindgen]
pub fn consensus(request_json: &str) -> String {
    let req: ConsensusRequest = match serde_json::from_str(request_json) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };
    match consensus_merge(&req.first, &req.second, req.sr_resolution) {
        Ok(label) => json!({ "label": label }).to_string(),
        Err(e) => error_json(e),
    }
}

#[derive(Debug, Clone, Deserialize)]
struct KappaRequest {
    levels: usize,
    first: Vec<usize>,
    second: Vec<usize>,
    #[serde(default)]
    weighting: Weighting,
}

/// Weighted Cohen's kappa of two rating lists given as JSON.
#[wasm_bindgen]
pub fn kappa(request_json: &str) -> String {
    let req: KappaRequest = match serde_json::from_str(request_json) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };
    match RatingPair::new(req.levels, req.first, req.second).and_then(|p| weighted_cohens_kappa(&p, req.weighting)) {
        Ok(k) => json!({ "kappa": k }).to_string(),
        Err(e) => error_json(e),
    }
}
