//! Forward and backward kernels for each layer type, operating on whole batches.

use rand::Rng;

use super::real::{gemm, Mat, Real};
use super::spec::pooled_extent;
use super::tensor::{Batch, Shape};

pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub in_dims: [usize; 3],
    pub out_dims: [usize; 3],
}

impl ConvGeom {
    pub fn new(input: Shape, output: Shape, k: usize, pad: usize) -> Self {
        Self { cin: input.channels, cout: output.channels, k, pad, in_dims: input.spatial, out_dims: output.spatial }
    }

    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k * self.k
    }

    pub fn out_voxels(&self) -> usize {
        self.out_dims.iter().product()
    }

    /// Valid output range along one axis for kernel offset `kk`.
    #[inline]
    fn valid(&self, axis: usize, kk: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kk);
        let hi = (self.in_dims[axis] + self.pad).saturating_sub(kk).min(self.out_dims[axis]);
        (lo, hi.max(lo))
    }

    /// Unfolds one sample into a `patch_len x out_voxels` matrix.
    pub fn im2col<F: Real>(&self, input: &[F], cols: &mut [F]) {
        let [_, iy_n, iz_n] = self.in_dims;
        let [_, oy_n, oz_n] = self.out_dims;
        let p = self.out_voxels();
        let k = self.k;
        let [ox_n, _, _] = self.out_dims;
        let plane = oy_n * oz_n;
        for ci in 0..self.cin {
            let chan = &input[ci * self.in_dims.iter().product::<usize>()..];
            for kx in 0..k {
                let (x0, x1) = self.valid(0, kx);
                for ky in 0..k {
                    let (y0, y1) = self.valid(1, ky);
                    for kz in 0..k {
                        let (z0, z1) = self.valid(2, kz);
                        let r = ((ci * k + kx) * k + ky) * k + kz;
                        let row = &mut cols[r * p..(r + 1) * p];
                        if z0 >= z1 || y0 >= y1 || x0 >= x1 {
                            row.fill(F::zero());
                            continue;
                        }
                        // Only the padding halo needs zeros; the interior is overwritten.
                        row[..x0 * plane].fill(F::zero());
                        row[x1 * plane..ox_n * plane].fill(F::zero());
                        for ox in x0..x1 {
                            let ix = ox + kx - self.pad;
                            row[ox * plane..ox * plane + y0 * oz_n].fill(F::zero());
                            row[ox * plane + y1 * oz_n..(ox + 1) * plane].fill(F::zero());
                            for oy in y0..y1 {
                                let iy = oy + ky - self.pad;
                                let src = (ix * iy_n + iy) * iz_n + z0 + kz - self.pad;
                                let dst = (ox * oy_n + oy) * oz_n;
                                row[dst..dst + z0].fill(F::zero());
                                row[dst + z0..dst + z1].copy_from_slice(&chan[src..src + (z1 - z0)]);
                                row[dst + z1..dst + oz_n].fill(F::zero());
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters patch gradients back onto the input grid.
    pub fn col2im<F: Real>(&self, cols: &[F], grad_in: &mut [F]) {
        let [_, iy_n, iz_n] = self.in_dims;
        let [_, oy_n, oz_n] = self.out_dims;
        let p = self.out_voxels();
        let k = self.k;
        let in_vox: usize = self.in_dims.iter().product();
        for ci in 0..self.cin {
            let chan = &mut grad_in[ci * in_vox..(ci + 1) * in_vox];
            for kx in 0..k {
                let (x0, x1) = self.valid(0, kx);
                for ky in 0..k {
                    let (y0, y1) = self.valid(1, ky);
                    for kz in 0..k {
                        let (z0, z1) = self.valid(2, kz);
                        if z0 >= z1 {
                            continue;
                        }
                        let r = ((ci * k + kx) * k + ky) * k + kz;
                        let row = &cols[r * p..(r + 1) * p];
                        for ox in x0..x1 {
                            let ix = ox + kx - self.pad;
                            for oy in y0..y1 {
                                let iy = oy + ky - self.pad;
                                let dst = (ix * iy_n + iy) * iz_n + z0 + kz - self.pad;
                                let src = (ox * oy_n + oy) * oz_n;
                                for (g, &c) in chan[dst..dst + (z1 - z0)].iter_mut().zip(&row[src + z0..src + z1]) {
                                    *g += c;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<F: Real>(
    geom: &ConvGeom,
    input: &Batch<F>,
    weight: &[F],
    bias: &[F],
    output_shape: Shape,
    cols: &mut Vec<F>,
) -> Batch<F> {
    let p = geom.out_voxels();
    let r = geom.patch_len();
    cols.resize(r * p, F::zero());
    let mut out = Batch::zeros(input.n, output_shape);
    for s in 0..input.n {
        geom.im2col(input.sample(s), cols);
        let o = out.sample_mut(s);
        gemm(Mat::rows(weight, geom.cout, r), Mat::rows(cols, r, p), F::zero(), o);
        for (co, &b) in bias.iter().enumerate() {
            o[co * p..(co + 1) * p].iter_mut().for_each(|v| *v += b);
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when `need_input_grad`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<F: Real>(
    geom: &ConvGeom,
    input: &Batch<F>,
    grad_out: &Batch<F>,
    weight: &[F],
    grad_weight: &mut [F],
    grad_bias: &mut [F],
    need_input_grad: bool,
    cols: &mut Vec<F>,
) -> Option<Batch<F>> {
    let p = geom.out_voxels();
    let r = geom.patch_len();
    cols.resize(r * p, F::zero());
    let mut grad_in = need_input_grad.then(|| Batch::zeros(input.n, input.shape));
    let mut dcols = if need_input_grad { vec![F::zero(); r * p] } else { Vec::new() };
    for s in 0..input.n {
        let go = grad_out.sample(s);
        for (co, gb) in grad_bias.iter_mut().enumerate() {
            *gb += sum(&go[co * p..(co + 1) * p]);
        }
        geom.im2col(input.sample(s), cols);
        gemm(Mat::rows(go, geom.cout, p), Mat::rows(cols, r, p).t(), F::one(), grad_weight);
        if let Some(gi) = grad_in.as_mut() {
            gemm(Mat::rows(weight, geom.cout, r).t(), Mat::rows(go, geom.cout, p), F::zero(), &mut dcols);
            geom.col2im(&dcols, gi.sample_mut(s));
        }
    }
    grad_in
}

/// Pairwise-free sum with eight accumulators so the loop vectorises.
pub(crate) fn sum<F: Real>(xs: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let rem = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            acc[i] += c[i];
        }
    }
    let mut total = acc.iter().copied().sum::<F>();
    for &v in rem {
        total += v;
    }
    total
}

pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut total = acc.iter().copied().sum::<F>();
    for (&x, &y) in ra.iter().zip(rb) {
        total += x * y;
    }
    total
}

pub(crate) struct BnCache<F> {
    pub normalized: Vec<F>,
    pub inv_std: Vec<F>,
}

/// Batch statistics of one batch-norm layer: per-channel mean and unbiased variance.
#[derive(Debug, Clone)]
pub(crate) struct BnStats<F> {
    pub mean: Vec<F>,
    pub var_unbiased: Vec<F>,
}

pub(crate) fn bn_forward_train<F: Real>(
    input: &Batch<F>,
    gamma: &[F],
    beta: &[F],
    eps: f64,
) -> (Batch<F>, BnCache<F>, BnStats<F>) {
    let c = input.shape.channels;
    let vox = input.shape.voxels();
    let count = input.n * vox;
    let count_f = F::of(count as f64);
    let mut mean = vec![F::zero(); c];
    let mut var = vec![F::zero(); c];
    for (ch, (m, v)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
        let mut s = F::zero();
        for n in 0..input.n {
            s += sum(&input.sample(n)[ch * vox..(ch + 1) * vox]);
        }
        *m = s / count_f;
        let mut sq = F::zero();
        for n in 0..input.n {
            for &x in &input.sample(n)[ch * vox..(ch + 1) * vox] {
                let d = x - *m;
                sq += d * d;
            }
        }
        *v = sq / count_f;
    }
    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + F::of(eps)).sqrt()).collect();
    let mut normalized = vec![F::zero(); input.data.len()];
    let mut out = Batch::zeros(input.n, input.shape);
    for n in 0..input.n {
        let base = n * c * vox;
        for ch in 0..c {
            let range = base + ch * vox..base + (ch + 1) * vox;
            for ((xh, y), &x) in
                normalized[range.clone()].iter_mut().zip(&mut out.data[range.clone()]).zip(&input.data[range])
            {
                *xh = (x - mean[ch]) * inv_std[ch];
                *y = gamma[ch] * *xh + beta[ch];
            }
        }
    }
    let bessel = if count > 1 { F::of(count as f64 / (count - 1) as f64) } else { F::one() };
    let var_unbiased = var.iter().map(|&v| v * bessel).collect();
    (out, BnCache { normalized, inv_std }, BnStats { mean, var_unbiased })
}

pub(crate) fn bn_forward_eval<F: Real>(
    input: &Batch<F>,
    gamma: &[F],
    beta: &[F],
    running_mean: &[F],
    running_var: &[F],
    eps: f64,
) -> Batch<F> {
    let c = input.shape.channels;
    let vox = input.shape.voxels();
    let mut out = input.clone();
    for n in 0..input.n {
        let s = out.sample_mut(n);
        for ch in 0..c {
            let scale = gamma[ch] / (running_var[ch] + F::of(eps)).sqrt();
            let shift = beta[ch] - running_mean[ch] * scale;
            s[ch * vox..(ch + 1) * vox].iter_mut().for_each(|v| *v = *v * scale + shift);
        }
    }
    out
}

pub(crate) fn bn_backward<F: Real>(
    grad_out: &Batch<F>,
    cache: &BnCache<F>,
    gamma: &[F],
    grad_gamma: &mut [F],
    grad_beta: &mut [F],
) -> Batch<F> {
    let c = grad_out.shape.channels;
    let vox = grad_out.shape.voxels();
    let count = F::of((grad_out.n * vox) as f64);
    let mut dgamma = vec![F::zero(); c];
    let mut dbeta = vec![F::zero(); c];
    for n in 0..grad_out.n {
        let base = n * c * vox;
        for ch in 0..c {
            let r = base + ch * vox..base + (ch + 1) * vox;
            dbeta[ch] += sum(&grad_out.data[r.clone()]);
            dgamma[ch] += dot(&grad_out.data[r.clone()], &cache.normalized[r]);
        }
    }
    let mut grad_in = Batch::zeros(grad_out.n, grad_out.shape);
    for n in 0..grad_out.n {
        let base = n * c * vox;
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / count;
            let r = base + ch * vox..base + (ch + 1) * vox;
            for ((gi, &go), &xh) in
                grad_in.data[r.clone()].iter_mut().zip(&grad_out.data[r.clone()]).zip(&cache.normalized[r])
            {
                *gi = k * (count * go - dbeta[ch] - xh * dgamma[ch]);
            }
        }
    }
    for ch in 0..c {
        grad_gamma[ch] += dgamma[ch];
        grad_beta[ch] += dbeta[ch];
    }
    grad_in
}

pub(crate) fn relu_forward<F: Real>(mut input: Batch<F>) -> Batch<F> {
    input.data.iter_mut().for_each(|v| *v = v.max(F::zero()));
    input
}

/// `output` is the ReLU's forward output; its positive entries mark the pass-through set.
pub(crate) fn relu_backward<F: Real>(mut grad: Batch<F>, output: &Batch<F>) -> Batch<F> {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= F::zero() {
            *g = F::zero();
        }
    }
    grad
}

/// Returns the pooled batch and, for each output, the flat per-sample index of its maximum.
pub(crate) fn maxpool_forward<F: Real>(input: &Batch<F>, output_shape: Shape) -> (Batch<F>, Vec<u32>) {
    let [ix, iy, iz] = input.shape.spatial;
    let [ox, oy, oz] = output_shape.spatial;
    debug_assert_eq!([ox, oy, oz], [pooled_extent(ix), pooled_extent(iy), pooled_extent(iz)]);
    let mut out = Batch::zeros(input.n, output_shape);
    let mut argmax = vec![0u32; out.data.len()];
    let in_vox = ix * iy * iz;
    let out_vox = ox * oy * oz;
    for n in 0..input.n {
        let src = input.sample(n);
        for c in 0..input.shape.channels {
            let cbase = c * in_vox;
            for x in 0..ox {
                for y in 0..oy {
                    for z in 0..oz {
                        let mut best = F::neg_infinity();
                        let mut best_i = 0usize;
                        for xx in 2 * x..(2 * x + 2).min(ix) {
                            for yy in 2 * y..(2 * y + 2).min(iy) {
                                let row = cbase + (xx * iy + yy) * iz;
                                for zz in 2 * z..(2 * z + 2).min(iz) {
                                    let v = src[row + zz];
                                    if v > best {
                                        best = v;
                                        best_i = row + zz;
                                    }
                                }
                            }
                        }
                        let o = n * output_shape.len() + c * out_vox + (x * oy + y) * oz + z;
                        out.data[o] = best;
                        argmax[o] = best_i as u32;
                    }
                }
            }
        }
    }
    (out, argmax)
}

pub(crate) fn maxpool_backward<F: Real>(grad_out: &Batch<F>, argmax: &[u32], input_shape: Shape) -> Batch<F> {
    let mut grad_in = Batch::zeros(grad_out.n, input_shape);
    let per_out = grad_out.shape.len();
    for n in 0..grad_out.n {
        let gi = grad_in.sample_mut(n);
        for (o, &g) in grad_out.sample(n).iter().enumerate() {
            gi[argmax[n * per_out + o] as usize] += g;
        }
    }
    grad_in
}

/// Inverted dropout; returns the output and the per-element scale (0 or `1/(1-rate)`).
pub(crate) fn dropout_forward<F: Real, R: Rng>(mut input: Batch<F>, rate: f64, rng: &mut R) -> (Batch<F>, Vec<F>) {
    let keep = F::of(1.0 / (1.0 - rate));
    let mask: Vec<F> =
        (0..input.data.len()).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect();
    input.data.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
    (input, mask)
}

pub(crate) fn dense_forward<F: Real>(input: &Batch<F>, weight: &[F], bias: &[F], out_features: usize) -> Batch<F> {
    let in_features = input.shape.len();
    let mut out = Batch::zeros(input.n, Shape::flat(out_features));
    gemm(
        Mat::rows(&input.data, input.n, in_features),
        Mat::rows(weight, out_features, in_features).t(),
        F::zero(),
        &mut out.data,
    );
    for n in 0..input.n {
        out.sample_mut(n).iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
    }
    out
}

pub(crate) fn dense_backward<F: Real>(
    input: &Batch<F>,
    grad_out: &Batch<F>,
    weight: &[F],
    grad_weight: &mut [F],
    grad_bias: &mut [F],
) -> Batch<F> {
    let in_features = input.shape.len();
    let out_features = grad_out.shape.len();
    gemm(
        Mat::rows(&grad_out.data, grad_out.n, out_features).t(),
        Mat::rows(&input.data, input.n, in_features),
        F::one(),
        grad_weight,
    );
    for n in 0..grad_out.n {
        grad_bias.iter_mut().zip(grad_out.sample(n)).for_each(|(b, &g)| *b += g);
    }
    let mut grad_in = Batch::zeros(input.n, input.shape);
    gemm(
        Mat::rows(&grad_out.data, grad_out.n, out_features),
        Mat::rows(weight, out_features, in_features),
        F::zero(),
        &mut grad_in.data,
    );
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-loop convolution used as an oracle for the im2col path.
    fn naive_conv(input: &[f64], geom: &ConvGeom, w: &[f64], b: &[f64]) -> Vec<f64> {
        let [ix, iy, iz] = geom.in_dims;
        let [ox, oy, oz] = geom.out_dims;
        let k = geom.k;
        let mut out = vec![0.0; geom.cout * ox * oy * oz];
        for co in 0..geom.cout {
            for x in 0..ox {
                for y in 0..oy {
                    for z in 0..oz {
                        let mut acc = b[co];
                        for ci in 0..geom.cin {
                            for a in 0..k {
                                for bb in 0..k {
                                    for c in 0..k {
                                        let (sx, sy, sz) = (
                                            x as isize + a as isize - geom.pad as isize,
                                            y as isize + bb as isize - geom.pad as isize,
                                            z as isize + c as isize - geom.pad as isize,
                                        );
                                        if sx < 0
                                            || sy < 0
                                            || sz < 0
                                            || sx >= ix as isize
                                            || sy >= iy as isize
                                            || sz >= iz as isize
                                        {
                                            continue;
                                        }
                                        let iv = input[((ci * ix + sx as usize) * iy + sy as usize) * iz + sz as usize];
                                        acc += iv * w[(((co * geom.cin + ci) * k + a) * k + bb) * k + c];
                                    }
                                }
                            }
                        }
                        out[((co * ox + x) * oy + y) * oz + z] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_convolution() {
        let input_shape = Shape::new(2, [4, 5, 3]);
        let output_shape = Shape::new(3, [4, 5, 3]);
        let geom = ConvGeom::new(input_shape, output_shape, 3, 1);
        let input: Vec<f64> = (0..input_shape.len()).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let w: Vec<f64> = (0..3 * geom.patch_len()).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
        let b = vec![0.5, -1.0, 0.25];
        let batch = Batch { n: 1, shape: input_shape, data: input.clone() };
        let mut cols = Vec::new();
        let out = conv_forward(&geom, &batch, &w, &b, output_shape, &mut cols);
        let want = naive_conv(&input, &geom, &w, &b);
        for (a, e) in out.data.iter().zip(&want) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let shape = Shape::new(2, [3, 4, 5]);
        let geom = ConvGeom::new(shape, Shape::new(1, [3, 4, 5]), 3, 1);
        let x: Vec<f64> = (0..shape.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..geom.patch_len() * geom.out_voxels()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; y.len()];
        geom.im2col(&x, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        geom.col2im(&y, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn maxpool_ceil_mode_keeps_partial_windows() {
        let shape = Shape::new(1, [3, 1, 1]);
        let batch = Batch { n: 1, shape, data: vec![1.0f64, 2.0, 7.0] };
        let (out, arg) = maxpool_forward(&batch, Shape::new(1, [2, 1, 1]));
        assert_eq!(out.data, vec![2.0, 7.0]);
        assert_eq!(arg, vec![1, 2]);
    }

    #[test]
    fn batchnorm_training_output_is_standardised() {
        let shape = Shape::new(3, [2, 3, 2]);
        let data: Vec<f64> = (0..2 * shape.len()).map(|i| ((i * 7919) % 97) as f64 * 0.3 - 4.0).collect();
        let batch = Batch { n: 2, shape, data };
        let (out, _, _) = bn_forward_train(&batch, &[1.0; 3], &[0.0; 3], 1e-5);
        let vox = shape.voxels();
        for c in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|n| out.sample(n)[c * vox..(c + 1) * vox].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn vectorised_sum_and_dot() {
        let a: Vec<f64> = (0..21).map(|i| i as f64).collect();
        assert_eq!(sum(&a), 210.0);
        assert_eq!(dot(&a, &a), (0..21).map(|i| (i * i) as f64).sum::<f64>());
    }
}
