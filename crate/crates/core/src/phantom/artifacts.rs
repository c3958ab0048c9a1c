use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::anatomy::{HeadGeometry, TissueIntensities, WM_RADIUS};
use crate::model::{Grade, Volume};

/// Noise standard deviation per grade step, as a fraction of the [0, 1] range.
pub const NOISE_SIGMA: f64 = 0.06;
/// Fraction of the GM-WM gap removed per contrast grade.
pub const CONTRAST_LOSS_PER_GRADE: f32 = 0.45;
pub const MOTION_GHOSTS: usize = 3;
pub const GADOLINIUM_INTENSITY: f32 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrMode {
    Truncated,
    Segmented,
}

/// Additive Gaussian noise with `sigma = 0.06 * grade`, clamped to [0, 1].
pub fn inject_noise(v: &Volume, grade: Grade, seed: u64) -> Volume {
    if grade.value() == 0 {
        return v.clone();
    }
    let sigma = NOISE_SIGMA * grade.value() as f64;
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = v.data().iter().map(|&x| (x as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32).collect();
    v.with_data(data)
}

/// Moves grey- and white-matter voxels toward their midpoint so the gap shrinks by `1 - 0.45 * grade`.
pub fn inject_contrast_loss(v: &Volume, grade: Grade, gm: f32, wm: f32) -> Volume {
    if grade.value() == 0 {
        return v.clone();
    }
    let keep = 1.0 - CONTRAST_LOSS_PER_GRADE * grade.value() as f32;
    let mid = (gm + wm) / 2.0;
    let (gm_new, wm_new) = (mid - (mid - gm) * keep, mid + (wm - mid) * keep);
    v.map(|x| {
        if x == gm {
            gm_new
        } else if x == wm {
            wm_new
        } else {
            x
        }
    })
}

fn shifted(v: &Volume, s: [isize; 3]) -> Vec<f32> {
    let [nx, ny, nz] = v.dims();
    let mut out = Vec::with_capacity(v.len());
    for x in 0..nx as isize {
        for y in 0..ny as isize {
            for z in 0..nz as isize {
                out.push(v.get_clamped(x - s[0], y - s[1], z - s[2]));
            }
        }
    }
    out
}

/// Ghosting: blends the volume with the mean of three copies shifted by
/// seeded integer offsets of at most `2 + 2 * grade` voxels per axis, weight `0.25 * grade`.
pub fn inject_motion(v: &Volume, grade: Grade, seed: u64) -> Volume {
    let g = grade.value();
    if g == 0 {
        return v.clone();
    }
    let max_shift = 2 + 2 * g as i64;
    let w = 0.25 * g as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ghost = vec![0f32; v.len()];
    for _ in 0..MOTION_GHOSTS {
        let s = loop {
            let s = [0; 3].map(|_: i64| rng.random_range(-max_shift..=max_shift) as isize);
            if s != [0, 0, 0] {
                break s;
            }
        };
        for (acc, val) in ghost.iter_mut().zip(shifted(v, s)) {
            *acc += val / MOTION_GHOSTS as f32;
        }
    }
    let data = v.data().iter().zip(&ghost).map(|(&x, &gh)| (1.0 - w) * x + w * gh).collect();
    v.with_data(data)
}

/// Voxels covered by 2-4 seeded curvilinear tubes running through the
/// grey-matter/CSF shell of the nominal head geometry.
pub fn gadolinium_mask(dims: [usize; 3], radii_fraction: [f64; 3], seed: u64) -> Vec<bool> {
    let g = HeadGeometry::nominal(dims, radii_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; dims.iter().product()];
    let n_tubes = rng.random_range(2..=4);
    for _ in 0..n_tubes {
        let radius: f64 = rng.random_range(1.0..=2.0);
        let rho = rng.random_range(WM_RADIUS + 0.12..=0.84);
        let u = random_unit(&mut rng);
        let w = {
            let r = random_unit(&mut rng);
            let d: f64 = (0..3).map(|i| r[i] * u[i]).sum();
            let p = [0, 1, 2].map(|i| r[i] - d * u[i]);
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
            p.map(|x| x / n)
        };
        let start = rng.random_range(0.0..std::f64::consts::TAU);
        let span = rng.random_range(0.8..1.6);
        let steps = 200;
        for s in 0..=steps {
            let t = start + span * s as f64 / steps as f64;
            let dir = [0, 1, 2].map(|i| t.cos() * u[i] + t.sin() * w[i]);
            let c = [0, 1, 2].map(|i| g.center[i] + rho * dir[i] * g.semi_axes[i]);
            stamp_ball(&mut mask, dims, c, radius);
        }
    }
    mask
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let p = [0; 3].map(|_: i32| rng.random_range(-1.0..1.0));
        let n: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return p.map(|x| x / n);
        }
    }
}

fn stamp_ball(mask: &mut [bool], dims: [usize; 3], c: [f64; 3], r: f64) {
    let lo = [0, 1, 2].map(|a| (c[a] - r).floor().max(0.0) as usize);
    let hi = [0, 1, 2].map(|a| ((c[a] + r).ceil().max(0.0) as usize).min(dims[a] - 1));
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                if d2 <= r * r {
                    mask[(x * dims[1] + y) * dims[2] + z] = true;
                }
            }
        }
    }
}

/// Paints the gadolinium tubes at intensity 0.95; every other voxel is untouched.
pub fn inject_gadolinium(v: &Volume, seed: u64) -> Volume {
    inject_gadolinium_with(v, [0.85; 3], seed)
}

pub fn inject_gadolinium_with(v: &Volume, radii_fraction: [f64; 3], seed: u64) -> Volume {
    let mask = gadolinium_mask(v.dims(), radii_fraction, seed);
    let data = v.data().iter().zip(&mask).map(|(&x, &m)| if m { GADOLINIUM_INTENSITY } else { x }).collect();
    v.with_data(data)
}

/// Straight-reject variants: a zeroed contiguous 40-60% block of slices along
/// a seeded axis, or a binary GM/WM-midpoint segmentation.
pub fn make_sr_variant(v: &Volume, mode: SrMode, tissues: &TissueIntensities, seed: u64) -> Volume {
    match mode {
        SrMode::Segmented => {
            let t = tissues.gm_wm_midpoint();
            v.map(|x| if x >= t { 1.0 } else { 0.0 })
        }
        SrMode::Truncated => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let axis = rng.random_range(0..3);
            let dims = v.dims();
            let n = dims[axis];
            let min = (0.4 * n as f64).ceil() as usize;
            let max = ((0.6 * n as f64).floor() as usize).max(min);
            let len = rng.random_range(min..=max).min(n);
            let start = rng.random_range(0..=n - len);
            let mut data = v.data().to_vec();
            for x in 0..dims[0] {
                for y in 0..dims[1] {
                    for z in 0..dims[2] {
                        let i = [x, y, z][axis];
                        if i >= start && i < start + len {
                            data[(x * dims[1] + y) * dims[2] + z] = 0.0;
                        }
                    }
                }
            }
            v.with_data(data)
        }
    }
}

/// Sum of absolute forward differences along every axis.
pub fn edge_energy(v: &Volume) -> f64 {
    let [nx, ny, nz] = v.dims();
    let mut e = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let c = v.get(x, y, z) as f64;
                if x + 1 < nx {
                    e += (v.get(x + 1, y, z) as f64 - c).abs();
                }
                if y + 1 < ny {
                    e += (v.get(x, y + 1, z) as f64 - c).abs();
                }
                if z + 1 < nz {
                    e += (v.get(x, y, z + 1) as f64 - c).abs();
                }
            }
        }
    }
    e
}
