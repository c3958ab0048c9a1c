use serde::{Deserialize, Serialize};

use crate::model::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Trilinear,
    /// Catmull-Rom cubic convolution.
    Cubic,
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Trilinear value at a continuous voxel index; outside the grid the nearest edge value is used.
pub fn sample_trilinear(v: &Volume, p: [f64; 3]) -> f64 {
    let [nx, ny, nz] = v.dims();
    let data = v.data();
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let n = [nx, ny, nz][a];
        let c = p[a].clamp(0.0, (n - 1) as f64);
        let f = c.floor();
        base[a] = f as usize;
        next[a] = (base[a] + 1).min(n - 1);
        frac[a] = c - f;
    }
    let at = |x: usize, y: usize, z: usize| data[(x * ny + y) * nz + z] as f64;
    let [fx, fy, fz] = frac;
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let c00 = lerp(at(base[0], base[1], base[2]), at(next[0], base[1], base[2]), fx);
    let c10 = lerp(at(base[0], next[1], base[2]), at(next[0], next[1], base[2]), fx);
    let c01 = lerp(at(base[0], base[1], next[2]), at(next[0], base[1], next[2]), fx);
    let c11 = lerp(at(base[0], next[1], next[2]), at(next[0], next[1], next[2]), fx);
    lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
}

/// Trilinear value and its gradient with respect to the continuous index.
///
/// Outside the grid the value is edge-clamped and the gradient along that axis is zero.
pub fn sample_trilinear_grad(v: &Volume, p: [f64; 3]) -> (f64, [f64; 3]) {
    let dims = v.dims();
    let [_, ny, nz] = dims;
    let data = v.data();
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut t = [0f64; 3];
    let mut inside = [true; 3];
    for a in 0..3 {
        let n = dims[a];
        let hi = (n - 1) as f64;
        if p[a] <= 0.0 || p[a] >= hi {
            inside[a] = false;
        }
        let c = p[a].clamp(0.0, hi);
        let f = c.floor().min((n.max(2) - 2) as f64);
        i0[a] = f as usize;
        i1[a] = (i0[a] + 1).min(n - 1);
        t[a] = c - f;
    }
    let at = |x: usize, y: usize, z: usize| data[(x * ny + y) * nz + z] as f64;
    let c = [
        [[at(i0[0], i0[1], i0[2]), at(i0[0], i0[1], i1[2])], [at(i0[0], i1[1], i0[2]), at(i0[0], i1[1], i1[2])]],
        [[at(i1[0], i0[1], i0[2]), at(i1[0], i0[1], i1[2])], [at(i1[0], i1[1], i0[2]), at(i1[0], i1[1], i1[2])]],
    ];
    let w = |a: usize, s: usize| if s == 0 { 1.0 - t[a] } else { t[a] };
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for sx in 0..2 {
        for sy in 0..2 {
            for sz in 0..2 {
                let v = c[sx][sy][sz];
                let (wx, wy, wz) = (w(0, sx), w(1, sy), w(2, sz));
                let sign = |s: usize| if s == 0 { -1.0 } else { 1.0 };
                value += wx * wy * wz * v;
                grad[0] += sign(sx) * wy * wz * v;
                grad[1] += wx * sign(sy) * wz * v;
                grad[2] += wx * wy * sign(sz) * v;
            }
        }
    }
    for a in 0..3 {
        if !inside[a] || dims[a] == 1 {
            grad[a] = 0.0;
        }
    }
    (value, grad)
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)]
}

/// Catmull-Rom cubic value at a continuous voxel index with edge clamping.
pub fn sample_cubic(v: &Volume, p: [f64; 3]) -> f64 {
    let dims = v.dims();
    let mut idx = [[0usize; 4]; 3];
    let mut w = [[0f64; 4]; 3];
    for a in 0..3 {
        let c = p[a].clamp(0.0, (dims[a] - 1) as f64);
        let f = c.floor();
        w[a] = catmull_rom(c - f);
        for (k, slot) in idx[a].iter_mut().enumerate() {
            *slot = clamp_index(f as isize + k as isize - 1, dims[a]);
        }
    }
    let mut acc = 0.0;
    for (ix, wx) in idx[0].iter().zip(w[0]) {
        for (iy, wy) in idx[1].iter().zip(w[1]) {
            for (iz, wz) in idx[2].iter().zip(w[2]) {
                acc += wx * wy * wz * v.get(*ix, *iy, *iz) as f64;
            }
        }
    }
    acc
}

pub fn sample(v: &Volume, p: [f64; 3], method: Interpolation) -> f64 {
    match method {
        Interpolation::Trilinear => sample_trilinear(v, p),
        Interpolation::Cubic => sample_cubic(v, p),
    }
}

/// Resamples to isotropic `spacing` mm.
///
/// Output dims are `round(dim * in_spacing / spacing)` (at least 1); output
/// voxel `j` samples input index `j * spacing / in_spacing`, so voxel 0 stays
/// anchored to voxel 0.
pub fn resample_isotropic(v: &Volume, spacing: f64, method: Interpolation) -> Volume {
    let in_sp = v.spacing();
    let in_dims = v.dims();
    let dims = [0, 1, 2].map(|a| ((in_dims[a] as f64 * in_sp[a] / spacing).round() as usize).max(1));
    let ratio = [0, 1, 2].map(|a| spacing / in_sp[a]);
    let out = Volume::from_fn(dims, [spacing; 3], |x, y, z| {
        sample(v, [x as f64 * ratio[0], y as f64 * ratio[1], z as f64 * ratio[2]], method) as f32
    })
    .expect("resampled geometry is valid");
    out.with_affine(v.affine().copied())
}

/// Maps intensities linearly onto [0, 1]; a constant volume becomes all zeros.
pub fn rescale_minmax(v: &Volume) -> Volume {
    let (lo, hi) = v.min_max();
    let (lo, range) = (lo as f64, hi as f64 - lo as f64);
    if range > 0.0 {
        v.map(|x| ((x as f64 - lo) / range) as f32)
    } else {
        v.map(|_| 0.0)
    }
}

/// Centre crop or zero pad to `shape`; when the difference is odd the extra
/// voxel is removed from (or added to) the high-index side.
pub fn crop_or_pad(v: &Volume, shape: [usize; 3]) -> Volume {
    let dims = v.dims();
    // Offset of output index 0 in input coordinates; truncating division puts
    // the odd voxel on the high side for both cropping and padding.
    let offset = [0, 1, 2].map(|a| (dims[a] as isize - shape[a] as isize) / 2);
    Volume::from_fn(shape, v.spacing(), |x, y, z| {
        let src = [x as isize + offset[0], y as isize + offset[1], z as isize + offset[2]];
        if (0..3).all(|a| src[a] >= 0 && src[a] < dims[a] as isize) {
            v.get(src[0] as usize, src[1] as usize, src[2] as usize)
        } else {
            0.0
        }
    })
    .expect("target shape components are >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3], spacing: f64) -> Volume {
        Volume::from_fn(dims, [spacing; 3], |x, y, z| (x * x + 3 * y + 7 * z) as f32 * 0.25).unwrap()
    }

    #[test]
    fn identity_resampling_is_exact() {
        let v = ramp([5, 4, 3], 1.0);
        assert_eq!(resample_isotropic(&v, 1.0, Interpolation::Trilinear).data(), v.data());
        let c = resample_isotropic(&v, 1.0, Interpolation::Cubic);
        for (a, b) in c.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn halving_resolution_picks_even_voxels() {
        let v = ramp([10, 10, 10], 0.5);
        let out = resample_isotropic(&v, 1.0, Interpolation::Trilinear);
        assert_eq!(out.dims(), [5, 5, 5]);
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    assert_eq!(out.get(x, y, z), v.get(2 * x, 2 * y, 2 * z));
                }
            }
        }
    }

    #[test]
    fn constants_survive_both_methods() {
        let v = Volume::filled([4, 6, 3], [0.7, 1.3, 2.0], 3.5).unwrap();
        for m in [Interpolation::Trilinear, Interpolation::Cubic] {
            let out = resample_isotropic(&v, 1.0, m);
            assert_eq!(out.dims(), [3, 8, 6]);
            assert!(out.data().iter().all(|&x| (x - 3.5).abs() < 1e-5));
        }
    }

    #[test]
    fn trilinear_gradient_matches_differences() {
        let v = ramp([6, 5, 4], 1.0);
        let p = [2.3, 1.6, 2.2];
        let (val, g) = sample_trilinear_grad(&v, p);
        assert!((val - sample_trilinear(&v, p)).abs() < 1e-9);
        for a in 0..3 {
            let mut hi = p;
            let mut lo = p;
            hi[a] += 1e-6;
            lo[a] -= 1e-6;
            let fd = (sample_trilinear(&v, hi) - sample_trilinear(&v, lo)) / 2e-6;
            assert!((fd - g[a]).abs() < 1e-5, "axis {a}: {fd} vs {}", g[a]);
        }
    }

    #[test]
    fn rescale_examples() {
        let v = Volume::new([3, 1, 1], [1.0; 3], vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(rescale_minmax(&v).data(), &[0.0, 0.5, 1.0]);
        let c = Volume::filled([2, 2, 2], [1.0; 3], 9.0).unwrap();
        assert!(rescale_minmax(&c).data().iter().all(|&x| x == 0.0));
        let unit = Volume::new([3, 1, 1], [1.0; 3], vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(rescale_minmax(&unit), unit);
    }

    #[test]
    fn crop_drops_first_and_last() {
        let v = Volume::from_fn([171, 2, 1], [1.0; 3], |x, _, _| x as f32).unwrap();
        let c = crop_or_pad(&v, [169, 2, 1]);
        assert_eq!(c.get(0, 0, 0), 1.0);
        assert_eq!(c.get(168, 1, 0), 169.0);
    }

    #[test]
    fn odd_crop_removes_extra_voxel_on_high_side() {
        let v = Volume::from_fn([4, 1, 1], [1.0; 3], |x, _, _| x as f32).unwrap();
        assert_eq!(crop_or_pad(&v, [1, 1, 1]).data(), &[1.0]);
        assert_eq!(crop_or_pad(&v, [2, 1, 1]).data(), &[1.0, 2.0]);
        assert_eq!(crop_or_pad(&v, [3, 1, 1]).data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn pad_centres_single_voxel() {
        let v = Volume::filled([1, 1, 1], [1.0; 3], 5.0).unwrap();
        let p = crop_or_pad(&v, [3, 3, 3]);
        assert_eq!(p.get(1, 1, 1), 5.0);
        assert_eq!(p.data().iter().filter(|&&x| x != 0.0).count(), 1);
        let q = crop_or_pad(&v, [2, 2, 2]);
        assert_eq!(q.get(0, 0, 0), 5.0);
    }
}
