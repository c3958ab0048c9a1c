use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use super::layers::{self, BnCache, BnStats, ConvGeom};
use super::loss;
use super::real::Real;
use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::{Batch, Shape, Tensor4};
use super::CnnError;

/// A named slice of the flat parameter (or buffer) vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub dims: Vec<usize>,
}

impl ParamSegment {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
enum Slot {
    None,
    Conv { weight: Range<usize>, bias: Range<usize> },
    Bn { gamma: Range<usize>, beta: Range<usize>, mean: Range<usize>, var: Range<usize> },
    Dense { weight: Range<usize>, bias: Range<usize> },
}

/// Whether a forward pass trains (batch statistics, dropout) or infers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Infer,
}

enum LayerCache<F> {
    None,
    Input(Batch<F>),
    Bn(BnCache<F>),
    Output(Batch<F>),
    Pool { argmax: Vec<u32>, input_shape: Shape },
    Dropout(Vec<F>),
}

/// Result of a forward pass: class probabilities plus everything backward needs.
pub struct ForwardPass<F> {
    pub logits: Vec<Vec<F>>,
    pub probs: Vec<Vec<F>>,
    caches: Vec<LayerCache<F>>,
    bn_stats: Vec<(usize, BnStats<F>)>,
    generation: u64,
    training: bool,
}

impl<F> ForwardPass<F> {
    pub fn batch_size(&self) -> usize {
        self.probs.len()
    }
}

/// Network parameters and batch-norm running statistics for a [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct Network<F> {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    slots: Vec<Slot>,
    params: Vec<F>,
    buffers: Vec<F>,
    param_segments: Vec<ParamSegment>,
    buffer_segments: Vec<ParamSegment>,
    generation: u64,
}

impl<F: Real> Network<F> {
    /// Allocates parameters: He-normal conv/dense weights, zero biases,
    /// unit batch-norm scale, zero shift, running mean 0 and variance 1.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self, CnnError> {
        let shapes = spec.validate()?;
        let mut param_segments = Vec::new();
        let mut buffer_segments = Vec::new();
        let mut n_params = 0usize;
        let mut n_buffers = 0usize;
        let push = |segs: &mut Vec<ParamSegment>, counter: &mut usize, name: String, dims: Vec<usize>| {
            let seg = ParamSegment { name, offset: *counter, dims };
            *counter += seg.len();
            let r = seg.range();
            segs.push(seg);
            r
        };
        let mut slots = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let (input, output) = (shapes[i], shapes[i + 1]);
            let prefix = format!("{}{}", layer.name(), i);
            let slot = match *layer {
                LayerSpec::Conv3d { out_channels, kernel, .. } => Slot::Conv {
                    weight: push(
                        &mut param_segments,
                        &mut n_params,
                        format!("{prefix}.weight"),
                        vec![out_channels, input.channels, kernel, kernel, kernel],
                    ),
                    bias: push(&mut param_segments, &mut n_params, format!("{prefix}.bias"), vec![out_channels]),
                },
                LayerSpec::BatchNorm { .. } => {
                    let c = input.channels;
                    Slot::Bn {
                        gamma: push(&mut param_segments, &mut n_params, format!("{prefix}.weight"), vec![c]),
                        beta: push(&mut param_segments, &mut n_params, format!("{prefix}.bias"), vec![c]),
                        mean: push(&mut buffer_segments, &mut n_buffers, format!("{prefix}.running_mean"), vec![c]),
                        var: push(&mut buffer_segments, &mut n_buffers, format!("{prefix}.running_var"), vec![c]),
                    }
                }
                LayerSpec::Dense { out_features } => Slot::Dense {
                    weight: push(
                        &mut param_segments,
                        &mut n_params,
                        format!("{prefix}.weight"),
                        vec![out_features, input.len()],
                    ),
                    bias: push(&mut param_segments, &mut n_params, format!("{prefix}.bias"), vec![output.len()]),
                },
                _ => Slot::None,
            };
            slots.push(slot);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![F::zero(); n_params];
        let mut buffers = vec![F::zero(); n_buffers];
        for slot in &slots {
            match slot {
                Slot::Conv { weight, .. } | Slot::Dense { weight, .. } => {
                    let len = weight.len();
                    let out = match slot {
                        Slot::Conv { bias, .. } | Slot::Dense { bias, .. } => bias.len(),
                        _ => unreachable!(),
                    };
                    let fan_in = len / out;
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    for p in &mut params[weight.clone()] {
                        *p = F::of(normal.sample(&mut rng));
                    }
                }
                Slot::Bn { gamma, var, .. } => {
                    params[gamma.clone()].fill(F::one());
                    buffers[var.clone()].fill(F::one());
                }
                Slot::None => {}
            }
        }
        Ok(Self { spec, shapes, slots, params, buffers, param_segments, buffer_segments, generation: 0 })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn buffers(&self) -> &[F] {
        &self.buffers
    }

    pub fn param_segments(&self) -> &[ParamSegment] {
        &self.param_segments
    }

    pub fn buffer_segments(&self) -> &[ParamSegment] {
        &self.buffer_segments
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Mutable parameter access; invalidates outstanding forward passes.
    pub fn params_mut(&mut self) -> &mut [F] {
        self.generation += 1;
        &mut self.params
    }

    /// Mutable running-statistics access; invalidates outstanding forward passes.
    pub fn buffers_mut(&mut self) -> &mut [F] {
        self.generation += 1;
        &mut self.buffers
    }

    /// Converts every parameter and buffer to another precision.
    pub fn cast<G: Real>(&self) -> Network<G> {
        let conv = |xs: &[F]| xs.iter().map(|&x| G::of(x.as_f64())).collect();
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            slots: self.slots.clone(),
            params: conv(&self.params),
            buffers: conv(&self.buffers),
            param_segments: self.param_segments.clone(),
            buffer_segments: self.buffer_segments.clone(),
            generation: 0,
        }
    }

    pub fn forward(&self, inputs: &[&Tensor4<F>], mode: Mode) -> Result<ForwardPass<F>, CnnError> {
        if inputs.is_empty() {
            return Err(CnnError::ShapeMismatch { expected: self.spec.input, found: "empty batch".into() });
        }
        let training = matches!(mode, Mode::Train { .. });
        if training && inputs.len() < 2 && self.has_batch_norm() {
            return Err(CnnError::BatchTooSmall(inputs.len()));
        }
        let mut dropout_rng = match mode {
            Mode::Train { dropout_seed } => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
            Mode::Infer => None,
        };
        let mut act = Batch::stack(inputs, self.spec.input)?;
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut bn_stats = Vec::new();
        let mut cols = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let out_shape = self.shapes[i + 1];
            let (next, cache) = match (layer, &self.slots[i]) {
                (LayerSpec::Conv3d { kernel, padding, .. }, Slot::Conv { weight, bias }) => {
                    let geom = ConvGeom::new(act.shape, out_shape, *kernel, *padding);
                    let out = layers::conv_forward(
                        &geom,
                        &act,
                        &self.params[weight.clone()],
                        &self.params[bias.clone()],
                        out_shape,
                        &mut cols,
                    );
                    (out, if training { LayerCache::Input(act) } else { LayerCache::None })
                }
                (LayerSpec::BatchNorm { eps, .. }, Slot::Bn { gamma, beta, mean, var }) => {
                    if training {
                        let (out, cache, stats) = layers::bn_forward_train(
                            &act,
                            &self.params[gamma.clone()],
                            &self.params[beta.clone()],
                            *eps,
                        );
                        bn_stats.push((i, stats));
                        (out, LayerCache::Bn(cache))
                    } else {
                        let out = layers::bn_forward_eval(
                            &act,
                            &self.params[gamma.clone()],
                            &self.params[beta.clone()],
                            &self.buffers[mean.clone()],
                            &self.buffers[var.clone()],
                            *eps,
                        );
                        (out, LayerCache::None)
                    }
                }
                (LayerSpec::Relu, _) => {
                    let out = layers::relu_forward(act);
                    let cache = if training { LayerCache::Output(out.clone()) } else { LayerCache::None };
                    (out, cache)
                }
                (LayerSpec::MaxPool, _) => {
                    let (out, argmax) = layers::maxpool_forward(&act, out_shape);
                    (out, if training { LayerCache::Pool { argmax, input_shape: act.shape } } else { LayerCache::None })
                }
                (LayerSpec::Dropout { rate }, _) => match dropout_rng.as_mut() {
                    Some(rng) => {
                        let (out, mask) = layers::dropout_forward(act, *rate, rng);
                        (out, LayerCache::Dropout(mask))
                    }
                    None => (act, LayerCache::None),
                },
                (LayerSpec::Dense { out_features }, Slot::Dense { weight, bias }) => {
                    let out = layers::dense_forward(
                        &act,
                        &self.params[weight.clone()],
                        &self.params[bias.clone()],
                        *out_features,
                    );
                    (out, if training { LayerCache::Input(act) } else { LayerCache::None })
                }
                _ => unreachable!("slot layout follows the spec"),
            };
            caches.push(cache);
            act = next;
        }
        let logits: Vec<Vec<F>> = (0..act.n).map(|s| act.sample(s).to_vec()).collect();
        let probs = logits.iter().map(|l| loss::softmax(l)).collect();
        Ok(ForwardPass { logits, probs, caches, bn_stats, generation: self.generation, training })
    }

    fn has_batch_norm(&self) -> bool {
        self.slots.iter().any(|s| matches!(s, Slot::Bn { .. }))
    }

    /// Weighted cross-entropy of a training pass and its gradient for every parameter.
    pub fn loss_and_gradient(
        &self,
        pass: &ForwardPass<F>,
        labels: &[usize],
        class_weights: &[F],
    ) -> Result<(F, Vec<F>), CnnError> {
        let k = self.spec.n_classes();
        if labels.len() != pass.batch_size() || labels.iter().any(|&y| y >= k) || class_weights.len() != k {
            return Err(CnnError::LabelMismatch);
        }
        let (loss, grad_logits) = loss::batch_loss_and_grad(&pass.logits, labels, class_weights);
        let grads = self.backward_from_logits(pass, &grad_logits)?;
        Ok((loss, grads))
    }

    /// Backpropagates an arbitrary gradient on the logits.
    pub fn backward_from_logits(&self, pass: &ForwardPass<F>, grad_logits: &[Vec<F>]) -> Result<Vec<F>, CnnError> {
        if !pass.training || pass.generation != self.generation {
            return Err(CnnError::StaleCache);
        }
        let n = pass.batch_size();
        let last = *self.shapes.last().expect("validated");
        let mut grad = Batch { n, shape: last, data: grad_logits.concat() };
        if grad.data.len() != n * last.len() {
            return Err(CnnError::LabelMismatch);
        }
        let mut grads = vec![F::zero(); self.params.len()];
        let mut cols = Vec::new();
        for i in (0..self.spec.layers.len()).rev() {
            let in_shape = self.shapes[i];
            let need_input_grad = i > 0;
            grad = match (&self.spec.layers[i], &self.slots[i], &pass.caches[i]) {
                (LayerSpec::Conv3d { kernel, padding, .. }, Slot::Conv { weight, bias }, LayerCache::Input(input)) => {
                    let geom = ConvGeom::new(in_shape, self.shapes[i + 1], *kernel, *padding);
                    let (gw, gb) = split_two(&mut grads, weight, bias);
                    match layers::conv_backward(
                        &geom,
                        input,
                        &grad,
                        &self.params[weight.clone()],
                        gw,
                        gb,
                        need_input_grad,
                        &mut cols,
                    ) {
                        Some(g) => g,
                        None => break,
                    }
                }
                (LayerSpec::BatchNorm { .. }, Slot::Bn { gamma, beta, .. }, LayerCache::Bn(cache)) => {
                    let (gg, gb) = split_two(&mut grads, gamma, beta);
                    layers::bn_backward(&grad, cache, &self.params[gamma.clone()], gg, gb)
                }
                (LayerSpec::Relu, _, LayerCache::Output(out)) => layers::relu_backward(grad, out),
                (LayerSpec::MaxPool, _, LayerCache::Pool { argmax, input_shape }) => {
                    layers::maxpool_backward(&grad, argmax, *input_shape)
                }
                (LayerSpec::Dropout { .. }, _, LayerCache::Dropout(mask)) => {
                    grad.data.iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
                    grad
                }
                (LayerSpec::Dense { .. }, Slot::Dense { weight, bias }, LayerCache::Input(input)) => {
                    let (gw, gb) = split_two(&mut grads, weight, bias);
                    let mut g = layers::dense_backward(input, &grad, &self.params[weight.clone()], gw, gb);
                    g.shape = in_shape;
                    g
                }
                _ => return Err(CnnError::StaleCache),
            };
        }
        Ok(grads)
    }

    /// Folds a training pass's batch statistics into the running mean/variance.
    pub fn update_running_stats(&mut self, pass: &ForwardPass<F>) {
        for (i, stats) in &pass.bn_stats {
            if let (LayerSpec::BatchNorm { momentum, .. }, Slot::Bn { mean, var, .. }) =
                (&self.spec.layers[*i], &self.slots[*i])
            {
                let m = F::of(*momentum);
                let keep = F::one() - m;
                for (r, &b) in self.buffers[mean.clone()].iter_mut().zip(&stats.mean) {
                    *r = keep * *r + m * b;
                }
                for (r, &b) in self.buffers[var.clone()].iter_mut().zip(&stats.var_unbiased) {
                    *r = keep * *r + m * b;
                }
            }
        }
    }

    /// Replaces parameters and buffers, checking lengths against the layout.
    pub fn load(&mut self, params: Vec<F>, buffers: Vec<F>) -> Result<(), CnnError> {
        if params.len() != self.params.len() || buffers.len() != self.buffers.len() {
            return Err(CnnError::Checkpoint(format!(
                "expected {} parameters and {} buffers, got {} and {}",
                self.params.len(),
                self.buffers.len(),
                params.len(),
                buffers.len()
            )));
        }
        self.params = params;
        self.buffers = buffers;
        self.generation += 1;
        Ok(())
    }
}

/// Two disjoint mutable sub-slices; `first` must precede `second`.
fn split_two<'a, F>(xs: &'a mut [F], first: &Range<usize>, second: &Range<usize>) -> (&'a mut [F], &'a mut [F]) {
    assert!(first.end <= second.start);
    let (a, b) = xs.split_at_mut(second.start);
    (&mut a[first.clone()], &mut b[..second.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input: Shape::new(1, [4, 4, 4]),
            layers: vec![
                LayerSpec::conv(2),
                LayerSpec::batch_norm(),
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { out_features: 2 },
            ],
        }
    }

    fn input(seed: u64) -> Tensor4<f64> {
        let data = (0..64).map(|i| ((i as f64 + seed as f64 * 7.0) * 0.37).sin()).collect();
        Tensor4::new(Shape::new(1, [4, 4, 4]), data).unwrap()
    }

    #[test]
    fn segments_cover_parameters() {
        let net = Network::<f64>::new(tiny_spec(), 1).unwrap();
        let names: Vec<_> = net.param_segments().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["conv0.weight", "conv0.bias", "bn1.weight", "bn1.bias", "fc5.weight", "fc5.bias"]);
        let total: usize = net.param_segments().iter().map(|s| s.len()).sum();
        assert_eq!(total, net.n_params());
        assert_eq!(net.n_params(), 2 * 27 + 2 + 2 + 2 + 2 * 16 + 2);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = Network::<f64>::new(tiny_spec(), 3).unwrap();
        let (a, b) = (input(1), input(2));
        for mode in [Mode::Infer, Mode::Train { dropout_seed: 9 }] {
            let pass = net.forward(&[&a, &b], mode).unwrap();
            for p in &pass.probs {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_gives_bias_path_logits() {
        let mut net = Network::<f64>::new(tiny_spec(), 5).unwrap();
        net.buffers_mut().fill(0.0);
        let fc_bias = net.param_segments().iter().find(|s| s.name == "fc5.bias").unwrap().range();
        net.params_mut()[fc_bias.clone()].copy_from_slice(&[0.25, -0.75]);
        let zero = Tensor4::zeros(Shape::new(1, [4, 4, 4]));
        let pass = net.forward(&[&zero], Mode::Infer).unwrap();
        // Conv and BN biases are zero, so everything before the last dense layer is zero.
        assert_eq!(pass.logits[0], vec![0.25, -0.75]);
    }

    #[test]
    fn stale_and_inference_caches_rejected() {
        let mut net = Network::<f64>::new(tiny_spec(), 3).unwrap();
        let (a, b) = (input(1), input(2));
        let infer = net.forward(&[&a, &b], Mode::Infer).unwrap();
        assert!(matches!(net.loss_and_gradient(&infer, &[0, 1], &[1.0, 1.0]), Err(CnnError::StaleCache)));
        let pass = net.forward(&[&a, &b], Mode::Train { dropout_seed: 1 }).unwrap();
        net.params_mut()[0] += 1.0;
        assert!(matches!(net.loss_and_gradient(&pass, &[0, 1], &[1.0, 1.0]), Err(CnnError::StaleCache)));
    }

    #[test]
    fn training_requires_two_samples() {
        let net = Network::<f64>::new(tiny_spec(), 3).unwrap();
        let a = input(1);
        assert!(matches!(net.forward(&[&a], Mode::Train { dropout_seed: 0 }), Err(CnnError::BatchTooSmall(1))));
        assert!(net.forward(&[&a], Mode::Infer).is_ok());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let net = Network::<f64>::new(tiny_spec(), 3).unwrap();
        let bad = Tensor4::<f64>::zeros(Shape::new(1, [4, 4, 5]));
        assert!(matches!(net.forward(&[&bad], Mode::Infer), Err(CnnError::ShapeMismatch { .. })));
    }

    #[test]
    fn loss_weight_scales_gradient() {
        let net = Network::<f64>::new(tiny_spec(), 11).unwrap();
        let (a, b) = (input(3), input(4));
        let pass = net.forward(&[&a, &b], Mode::Train { dropout_seed: 2 }).unwrap();
        let (_, g1) = net.loss_and_gradient(&pass, &[1, 1], &[0.3, 1.0]).unwrap();
        let (_, g2) = net.loss_and_gradient(&pass, &[1, 1], &[0.3, 2.0]).unwrap();
        for (x, y) in g1.iter().zip(&g2) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        let (l0, g0) = net.loss_and_gradient(&pass, &[1, 1], &[1.0, 0.0]).unwrap();
        assert_eq!(l0, 0.0);
        assert!(g0.iter().all(|&g| g == 0.0));
    }
}
