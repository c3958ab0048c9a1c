//! Finite-difference verification of backpropagated parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{Mode, Network};
use super::tensor::Tensor4;
use super::CnnError;

#[derive(Debug, Clone, Serialize)]
pub struct GradientProbe {
    pub segment: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub probes: Vec<GradientProbe>,
    pub max_relative_error: f64,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps vanishing
/// gradients from turning round-off into large ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central differences of step `h` at
/// `per_segment` seeded positions of every parameter segment. The training
/// pass uses a fixed dropout seed so every evaluation sees the same mask.
pub fn check_gradients(
    net: &Network<f64>,
    inputs: &[&Tensor4<f64>],
    labels: &[usize],
    class_weights: &[f64],
    per_segment: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> Result<GradientCheck, CnnError> {
    let mode = Mode::Train { dropout_seed: seed };
    let pass = net.forward(inputs, mode)?;
    let (_, grads) = net.loss_and_gradient(&pass, labels, class_weights)?;
    let mut probe_net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_at = |net: &mut Network<f64>, i: usize, v: f64| -> Result<f64, CnnError> {
        net.params_mut()[i] = v;
        let pass = net.forward(inputs, mode)?;
        Ok(net.loss_and_gradient(&pass, labels, class_weights)?.0)
    };
    let mut probes = Vec::new();
    for seg in net.param_segments().to_vec() {
        let count = per_segment.min(seg.len());
        for _ in 0..count {
            let i = seg.offset + rng.random_range(0..seg.len());
            let x = net.params()[i];
            let plus = loss_at(&mut probe_net, i, x + h)?;
            let minus = loss_at(&mut probe_net, i, x - h)?;
            probe_net.params_mut()[i] = x;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads[i];
            probes.push(GradientProbe {
                segment: seg.name.clone(),
                index: i - seg.offset,
                analytic,
                numeric,
                relative_error: relative_error(analytic, numeric, floor),
            });
        }
    }
    let max_relative_error = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    Ok(GradientCheck { probes, max_relative_error })
}
