use serde::{Deserialize, Serialize};

use super::affine::{AffineMap, AffineParams};
use super::resample::{sample_trilinear, sample_trilinear_grad};
use super::PreprocessError;
use crate::model::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Downsampling factors, coarse to fine.
    pub pyramid: Vec<usize>,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub min_step: f64,
    /// Start from the translation that aligns the intensity centres of mass.
    pub center_of_mass_init: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            pyramid: vec![4, 2, 1],
            max_iterations: 200,
            initial_step: 0.1,
            min_step: 1e-5,
            center_of_mass_init: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub factor: usize,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub accepted: Vec<f64>,
    pub hit_iteration_cap: bool,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub params: AffineParams,
    /// Moving volume resampled onto the reference grid.
    pub registered: Volume,
    pub final_mse: f64,
    pub levels: Vec<LevelTrace>,
    /// Set when the finest level ran out of iterations while the objective was
    /// still dropping by more than 0.1% over its last ten accepted steps.
    pub non_convergence: bool,
}

/// A volume as a grid in centred physical coordinates: `phys = origin + index * step`.
struct Grid {
    vol: Volume,
    origin: [f64; 3],
    step: [f64; 3],
}

impl Grid {
    fn full(v: &Volume) -> Self {
        let (d, s) = (v.dims(), v.spacing());
        Grid { vol: v.clone(), origin: [0, 1, 2].map(|a| -((d[a] - 1) as f64) / 2.0 * s[a]), step: s }
    }

    /// Block-averages by `f`, dropping a partial trailing block.
    fn downsampled(v: &Volume, f: usize) -> Self {
        if f <= 1 {
            return Self::full(v);
        }
        let (d, s) = (v.dims(), v.spacing());
        let fa = [0, 1, 2].map(|a| f.min(d[a]));
        let dims = [0, 1, 2].map(|a| (d[a] / fa[a]).max(1));
        let vol = Volume::from_fn(dims, [0, 1, 2].map(|a| s[a] * fa[a] as f64), |x, y, z| {
            let mut acc = 0.0f64;
            for i in x * fa[0]..(x + 1) * fa[0] {
                for j in y * fa[1]..(y + 1) * fa[1] {
                    for k in z * fa[2]..(z + 1) * fa[2] {
                        acc += v.get(i, j, k) as f64;
                    }
                }
            }
            (acc / (fa[0] * fa[1] * fa[2]) as f64) as f32
        })
        .expect("downsampled geometry is valid");
        let origin = [0, 1, 2].map(|a| ((fa[a] as f64 - 1.0) / 2.0 - (d[a] - 1) as f64 / 2.0) * s[a]);
        Grid { vol, origin, step: [0, 1, 2].map(|a| s[a] * fa[a] as f64) }
    }

    fn phys(&self, i: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + i[a] as f64 * self.step[a])
    }

    fn index(&self, y: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| (y[a] - self.origin[a]) / self.step[a])
    }
}

/// Mean squared error and, when requested, its gradient in parameter space.
fn objective(moving: &Grid, reference: &Grid, p: &AffineParams, with_grad: bool) -> (f64, [f64; 12]) {
    let map = p.to_map();
    let [nx, ny, nz] = reference.vol.dims();
    let rdata = reference.vol.data();
    let mut sse = 0.0;
    let mut g_t = [0.0; 3];
    let mut g_m = [[0.0; 3]; 3];
    let mut idx = 0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let x = reference.phys([i, j, k]);
                let q = moving.index(map.apply(x));
                let target = rdata[idx] as f64;
                idx += 1;
                if with_grad {
                    let (val, gi) = sample_trilinear_grad(&moving.vol, q);
                    let r = val - target;
                    sse += r * r;
                    for a in 0..3 {
                        let gy = 2.0 * r * gi[a] / moving.step[a];
                        g_t[a] += gy;
                        for b in 0..3 {
                            g_m[a][b] += gy * x[b];
                        }
                    }
                } else {
                    let r = sample_trilinear(&moving.vol, q) - target;
                    sse += r * r;
                }
            }
        }
    }
    let n = (nx * ny * nz) as f64;
    let mut grad = [0.0; 12];
    if with_grad {
        grad[..3].copy_from_slice(&g_t.map(|v| v / n));
        for (k, d) in p.matrix_derivatives().iter().enumerate() {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += g_m[a][b] * d[a][b];
                }
            }
            grad[3 + k] = acc / n;
        }
    }
    (sse / n, grad)
}

/// Resamples `moving` onto the grid of `reference` through `map`
/// (reference-centred millimetres to moving-centred millimetres), trilinear with edge clamping.
pub fn apply_affine(
    moving: &Volume,
    map: &AffineMap,
    reference_dims: [usize; 3],
    reference_spacing: [f64; 3],
) -> Volume {
    let mg = Grid::full(moving);
    let origin = [0, 1, 2].map(|a| -((reference_dims[a] - 1) as f64) / 2.0 * reference_spacing[a]);
    Volume::from_fn(reference_dims, reference_spacing, |x, y, z| {
        let p = [x, y, z];
        let phys = [0, 1, 2].map(|a| origin[a] + p[a] as f64 * reference_spacing[a]);
        sample_trilinear(&mg.vol, mg.index(map.apply(phys))) as f32
    })
    .expect("reference geometry is valid")
}

/// Intensity-based affine alignment of `moving` to `reference` by mean squared error.
///
/// Each pyramid level runs normalised gradient descent: parameters are scaled
/// so one unit moves the volume corners by roughly the same distance
/// (translations in units of the reference half-extent), a candidate step
/// along the negative gradient direction is accepted only if it lowers the
/// objective, and the step is halved otherwise.
pub fn register_affine(
    moving: &Volume,
    reference: &Volume,
    cfg: &RegistrationConfig,
) -> Result<Registration, PreprocessError> {
    for (name, v) in [("moving", moving), ("reference", reference)] {
        let (lo, hi) = v.min_max();
        if lo == hi {
            return Err(PreprocessError::ConstantVolume(name));
        }
    }
    if cfg.pyramid.is_empty() || cfg.pyramid.contains(&0) || cfg.initial_step <= 0.0 {
        return Err(PreprocessError::InvalidConfig("registration pyramid factors and step must be positive".into()));
    }
    let half_extent =
        (0..3).map(|a| (reference.dims()[a] - 1) as f64 * reference.spacing()[a] / 2.0).fold(0.0, f64::max).max(1.0);
    let scale: [f64; 12] = std::array::from_fn(|k| if k < 3 { half_extent } else { 1.0 });

    let mut params = AffineParams::identity();
    if cfg.center_of_mass_init {
        let (cm, cr) = (center_of_mass(&Grid::full(moving)), center_of_mass(&Grid::full(reference)));
        params.translation = [0, 1, 2].map(|a| cm[a] - cr[a]);
    }
    let mut levels = Vec::new();
    let mut non_convergence = false;
    for (li, &factor) in cfg.pyramid.iter().enumerate() {
        let mg = Grid::downsampled(moving, factor);
        let rg = Grid::downsampled(reference, factor);
        let (mut value, mut grad) = objective(&mg, &rg, &params, true);
        let mut accepted = vec![value];
        let mut step = cfg.initial_step;
        let mut iterations = 0;
        let mut hit_cap = true;
        while iterations < cfg.max_iterations {
            if step < cfg.min_step {
                hit_cap = false;
                break;
            }
            let gq: [f64; 12] = std::array::from_fn(|k| grad[k] * scale[k]);
            let norm = gq.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                hit_cap = false;
                break;
            }
            iterations += 1;
            let current = params.to_array();
            let candidate: [f64; 12] = std::array::from_fn(|k| current[k] - step * gq[k] / norm * scale[k]);
            let cand = AffineParams::from_array(&candidate);
            let (cv, _) = objective(&mg, &rg, &cand, false);
            if cv < value {
                params = cand;
                (value, grad) = objective(&mg, &rg, &params, true);
                accepted.push(value);
            } else {
                step *= 0.5;
            }
        }
        if li + 1 == cfg.pyramid.len() && hit_cap {
            let n = accepted.len();
            let before = accepted[n.saturating_sub(11)];
            non_convergence = before > 0.0 && (before - value) / before > 1e-3;
        }
        levels.push(LevelTrace { factor, iterations, accepted, hit_iteration_cap: hit_cap });
    }
    let registered = apply_affine(moving, &params.to_map(), reference.dims(), reference.spacing());
    let final_mse = objective(&Grid::full(moving), &Grid::full(reference), &params, false).0;
    Ok(Registration { params, registered, final_mse, levels, non_convergence })
}

/// Intensity-weighted centroid in centred millimetres, after subtracting the minimum.
fn center_of_mass(g: &Grid) -> [f64; 3] {
    let (lo, _) = g.vol.min_max();
    let [_, ny, nz] = g.vol.dims();
    let mut acc = [0.0; 3];
    let mut mass = 0.0;
    for (i, &v) in g.vol.data().iter().enumerate() {
        let w = (v - lo) as f64;
        let p = [i / (ny * nz), i / nz % ny, i % nz];
        for a in 0..3 {
            acc[a] += w * (g.origin[a] + p[a] as f64 * g.step[a]);
        }
        mass += w;
    }
    acc.map(|c| c / mass)
}

/// Mean distance, in voxels of the given grid, between where two maps send the eight grid corners.
pub fn mean_corner_displacement(a: &AffineMap, b: &AffineMap, dims: [usize; 3], spacing: [f64; 3]) -> f64 {
    let half = [0, 1, 2].map(|k| (dims[k] - 1) as f64 / 2.0 * spacing[k]);
    let mut total = 0.0;
    for corner in 0..8 {
        let c = [0, 1, 2].map(|k| if corner >> k & 1 == 1 { half[k] } else { -half[k] });
        let (pa, pb) = (a.apply(c), b.apply(c));
        total += (0..3).map(|k| ((pa[k] - pb[k]) / spacing[k]).powi(2)).sum::<f64>().sqrt();
    }
    total / 8.0
}
