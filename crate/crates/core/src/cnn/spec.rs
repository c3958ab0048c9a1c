use serde::{Deserialize, Serialize};

use super::tensor::Shape;
use super::CnnError;

/// One layer of a feed-forward 3D network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Cubic kernel, stride 1, zero padding on every face.
    Conv3d {
        out_channels: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default = "default_padding")]
        padding: usize,
    },
    /// Per-channel batch normalisation with learned scale and shift.
    BatchNorm {
        #[serde(default = "default_bn_momentum")]
        momentum: f64,
        #[serde(default = "default_bn_eps")]
        eps: f64,
    },
    Relu,
    /// 2x2x2 max pooling, stride 2, ceil mode: odd extents keep a partial window.
    MaxPool,
    /// Inverted dropout: active only in training, survivors scaled by `1 / (1 - rate)`.
    Dropout {
        rate: f64,
    },
    /// Fully connected layer over the flattened input.
    Dense {
        out_features: usize,
    },
}

fn default_kernel() -> usize {
    3
}
fn default_padding() -> usize {
    1
}
fn default_bn_momentum() -> f64 {
    0.1
}
fn default_bn_eps() -> f64 {
    1e-5
}

impl LayerSpec {
    pub fn conv(out_channels: usize) -> Self {
        LayerSpec::Conv3d { out_channels, kernel: 3, padding: 1 }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm { momentum: default_bn_momentum(), eps: default_bn_eps() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "conv",
            LayerSpec::BatchNorm { .. } => "bn",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool => "pool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Dense { .. } => "fc",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, CnnError> {
        match *self {
            LayerSpec::Conv3d { out_channels, kernel, padding } => {
                if out_channels == 0 || kernel == 0 {
                    return Err(CnnError::InvalidSpec("convolution needs out_channels >= 1 and kernel >= 1".into()));
                }
                let mut spatial = [0; 3];
                for a in 0..3 {
                    let padded = input.spatial[a] + 2 * padding;
                    if padded < kernel {
                        return Err(CnnError::InvalidSpec(format!(
                            "kernel {kernel} larger than padded extent {padded} on axis {a}"
                        )));
                    }
                    spatial[a] = padded - kernel + 1;
                }
                Ok(Shape::new(out_channels, spatial))
            }
            LayerSpec::BatchNorm { momentum, eps } => {
                if !(0.0..=1.0).contains(&momentum) || !(eps > 0.0) {
                    return Err(CnnError::InvalidSpec("batch norm momentum must lie in [0,1] and eps > 0".into()));
                }
                Ok(input)
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::MaxPool => Ok(Shape::new(input.channels, input.spatial.map(pooled_extent))),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(CnnError::InvalidSpec(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input)
            }
            LayerSpec::Dense { out_features } => {
                if out_features == 0 {
                    return Err(CnnError::InvalidSpec("dense layer needs out_features >= 1".into()));
                }
                Ok(Shape::flat(out_features))
            }
        }
    }
}

/// Ceil-mode extent after 2x2x2 stride-2 pooling.
pub fn pooled_extent(extent: usize) -> usize {
    extent.div_ceil(2)
}

/// Ordered layer list applied to single-channel volumes of `input_shape`;
/// a softmax over the last layer's outputs is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Five conv blocks (Conv3d + BatchNorm + ReLU + MaxPool with 8/16/32/64/128
    /// channels), then dropout 0.5 and three fully connected layers
    /// (`fc_hidden`, 50, 2) with ReLU between them.
    pub fn conv5_fc3(input_spatial: [usize; 3], fc_hidden: usize) -> Self {
        let mut layers = Vec::new();
        for channels in [8, 16, 32, 64, 128] {
            layers.extend([LayerSpec::conv(channels), LayerSpec::batch_norm(), LayerSpec::Relu, LayerSpec::MaxPool]);
        }
        layers.extend([
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { out_features: fc_hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { out_features: 50 },
            LayerSpec::Relu,
            LayerSpec::Dense { out_features: 2 },
        ]);
        Self { input: Shape::new(1, input_spatial), layers }
    }

    /// Default geometry: 169x208x179 inputs, 1300 hidden units.
    pub fn conv5_fc3_default() -> Self {
        Self::conv5_fc3([169, 208, 179], 1300)
    }

    /// Shape after every layer; element 0 is the input shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, CnnError> {
        if self.input.is_empty() {
            return Err(CnnError::InvalidSpec("empty input shape".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<Vec<Shape>, CnnError> {
        let shapes = self.shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense { out_features }) if *out_features >= 2 => Ok(shapes),
            _ => Err(CnnError::InvalidSpec("network must end in a dense layer with >= 2 outputs".into())),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { out_features }) => *out_features,
            _ => 0,
        }
    }

    /// Output shape of every max-pooling layer, in order.
    pub fn pooled_shapes(&self) -> Result<Vec<Shape>, CnnError> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes[1..])
            .filter(|(l, _)| matches!(l, LayerSpec::MaxPool))
            .map(|(_, s)| *s)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_block_shapes() {
        let spec = NetworkSpec::conv5_fc3_default();
        let pooled: Vec<String> = spec.pooled_shapes().unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(pooled, ["8x85x104x90", "16x43x52x45", "32x22x26x23", "64x11x13x12", "128x6x7x6"]);
        let shapes = spec.validate().unwrap();
        assert_eq!(shapes[1].to_string(), "8x169x208x179");
        assert_eq!(shapes.last().unwrap().channels, 2);
    }

    #[test]
    fn pooled_extent_is_ceil_half() {
        for n in 1..200 {
            assert_eq!(pooled_extent(n), (n as f64 / 2.0).ceil() as usize);
        }
    }

    #[test]
    fn spec_rejects_bad_layers() {
        let mut spec = NetworkSpec::conv5_fc3([8, 8, 8], 16);
        spec.layers.push(LayerSpec::Relu);
        assert!(spec.validate().is_err());
        let bad = NetworkSpec { input: Shape::new(1, [2, 2, 2]), layers: vec![LayerSpec::Dropout { rate: 1.0 }] };
        assert!(bad.shapes().is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = NetworkSpec::conv5_fc3([32, 40, 36], 1300);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains(r#"{"type":"conv3d","out_channels":8,"kernel":3,"padding":1}"#));
        assert_eq!(serde_json::from_str::<NetworkSpec>(&json).unwrap(), spec);
    }
}
