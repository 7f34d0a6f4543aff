use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    BatchNorm,
}

/// Unpadded max pooling applied after a layer's nonlinearity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxPoolSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub output_units: usize,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    pub normalization: Normalization,
    #[serde(default)]
    pub max_pool: Option<MaxPoolSpec>,
    /// Declared output spatial dims (after pooling); checked during propagation.
    #[serde(default)]
    pub expected_output: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalPool {
    GlobalAverage,
}

/// Declarative convolutional encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub name: String,
    /// `(C, spatial dims...)`
    pub input_shape: Vec<usize>,
    pub layers: Vec<ConvLayerSpec>,
    #[serde(default)]
    pub pool: Option<TerminalPool>,
    pub representation_dim: usize,
}

/// Output shape of one layer: channels and spatial dims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub channels: usize,
    pub spatial: Vec<usize>,
}

impl LayerShape {
    /// `c × Π spatial`
    pub fn flat_len(&self) -> usize {
        self.channels * self.spatial.iter().product::<usize>()
    }
}

fn window_out(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (n + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

fn conv_block(units: usize, k: usize, s: usize, p: usize, rank: usize) -> ConvLayerSpec {
    ConvLayerSpec {
        output_units: units,
        kernel: vec![k; rank],
        stride: vec![s; rank],
        padding: vec![p; rank],
        nonlinearity: Nonlinearity::Relu,
        normalization: Normalization::BatchNorm,
        max_pool: None,
        expected_output: None,
    }
}

impl EncoderSpec {
    /// Four-layer DCGAN-style encoder for `channels × 32 × 32` images:
    /// units 32, 64, 128, 64 at 16², 8², 4², 1².
    pub fn dcgan(channels: usize) -> Self {
        let mut layers = Vec::new();
        for (units, stride, pad, out) in [(32, 2, 1, 16), (64, 2, 1, 8), (128, 2, 1, 4), (64, 1, 0, 1)] {
            let mut l = conv_block(units, 4, stride, pad, 2);
            l.expected_output = Some(vec![out, out]);
            layers.push(l);
        }
        EncoderSpec { name: "dcgan".into(), input_shape: vec![channels, 32, 32], layers, pool: None, representation_dim: 64 }
    }

    /// Three-layer encoder for small `channels × size × size` images
    /// (`size` divisible by 4): units 8, 16, 16 at (size/2)², (size/4)², 1².
    pub fn compact(channels: usize, size: usize) -> Self {
        let q = size / 4;
        let mut layers = Vec::new();
        for (units, k, stride, pad, out) in [(8, 4, 2, 1, size / 2), (16, 4, 2, 1, q), (16, q, 1, 0, 1)] {
            let mut l = conv_block(units, k, stride, pad, 2);
            l.expected_output = Some(vec![out, out]);
            layers.push(l);
        }
        EncoderSpec { name: "compact".into(), input_shape: vec![channels, size, size], layers, pool: None, representation_dim: 16 }
    }

    /// Volumetric AlexNet-style encoder for `1 × 91 × 109 × 91` scans, five
    /// conv layers (64, 128, 192, 192, 64 units at 62³, 18³, 6³, 6³, 6³) and a
    /// global average pool. Shape-checked only; execution supports 2-D specs.
    pub fn alexnet3d() -> Self {
        let mut l1 = conv_block(64, 0, 1, 0, 3);
        l1.kernel = vec![30, 48, 30];
        let mut l2 = conv_block(128, 7, 1, 0, 3);
        l2.max_pool = Some(MaxPoolSpec { kernel: vec![3; 3], stride: vec![3; 3] });
        let mut l3 = conv_block(192, 3, 1, 1, 3);
        l3.max_pool = Some(MaxPoolSpec { kernel: vec![3; 3], stride: vec![3; 3] });
        let l4 = conv_block(192, 3, 1, 1, 3);
        let l5 = conv_block(64, 3, 1, 1, 3);
        let mut layers = vec![l1, l2, l3, l4, l5];
        for (l, d) in layers.iter_mut().zip([62, 18, 6, 6, 6]) {
            l.expected_output = Some(vec![d; 3]);
        }
        EncoderSpec { name: "alexnet3d".into(), input_shape: vec![1, 91, 109, 91], layers, pool: Some(TerminalPool::GlobalAverage), representation_dim: 64 }
    }

    pub fn spatial_rank(&self) -> usize {
        self.input_shape.len().saturating_sub(1)
    }

    /// Propagates shapes through every layer, checking declared dims.
    /// Layer indices in errors are 1-based; 0 refers to the input.
    pub fn propagate(&self) -> Result<Vec<LayerShape>> {
        let spec_err = |layer: usize, message: String| Error::Spec { layer, message };
        if self.input_shape.len() < 2 || self.input_shape.contains(&0) {
            return Err(spec_err(0, format!("input shape {:?} must be (C, spatial...) with positive dims", self.input_shape)));
        }
        if self.layers.is_empty() {
            return Err(spec_err(0, "encoder has no layers".into()));
        }
        let rank = self.spatial_rank();
        let mut spatial = self.input_shape[1..].to_vec();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (idx, l) in self.layers.iter().enumerate() {
            let layer = idx + 1;
            for (what, v) in [("kernel", &l.kernel), ("stride", &l.stride), ("padding", &l.padding)] {
                if v.len() != rank {
                    return Err(spec_err(layer, format!("{what} has {} dims, input has {rank} spatial dims", v.len())));
                }
            }
            if l.output_units == 0 || l.kernel.contains(&0) || l.stride.contains(&0) {
                return Err(spec_err(layer, "units, kernel and stride must be positive".into()));
            }
            let mut next = Vec::with_capacity(rank);
            for d in 0..rank {
                next.push(window_out(spatial[d], l.kernel[d], l.stride[d], l.padding[d]).ok_or_else(|| {
                    spec_err(layer, format!("kernel {:?} does not fit input {:?} with padding {:?}", l.kernel, spatial, l.padding))
                })?);
            }
            if let Some(p) = &l.max_pool {
                if p.kernel.len() != rank || p.stride.len() != rank || p.kernel.contains(&0) || p.stride.contains(&0) {
                    return Err(spec_err(layer, "max pool kernel/stride must be positive with one entry per spatial dim".into()));
                }
                for d in 0..rank {
                    next[d] = window_out(next[d], p.kernel[d], p.stride[d], 0)
                        .ok_or_else(|| spec_err(layer, format!("pool window {:?} larger than {:?}", p.kernel, next)))?;
                }
            }
            if let Some(expected) = &l.expected_output {
                if *expected != next {
                    return Err(spec_err(layer, format!("computed output dims {next:?}, declared {expected:?}")));
                }
            }
            spatial = next;
            shapes.push(LayerShape { channels: l.output_units, spatial: spatial.clone() });
        }
        let last = shapes.last().expect("non-empty");
        let rep = match self.pool {
            Some(TerminalPool::GlobalAverage) => last.channels,
            None => last.flat_len(),
        };
        if rep != self.representation_dim {
            return Err(spec_err(self.layers.len(), format!("representation is {rep} wide, spec declares {}", self.representation_dim)));
        }
        Ok(shapes)
    }

    /// Checks shapes and that the spec can run on the 2-D runtime.
    pub fn validate_executable(&self) -> Result<Vec<LayerShape>> {
        let shapes = self.propagate()?;
        if self.spatial_rank() != 2 {
            return Err(Error::Spec { layer: 0, message: format!("only 2-D encoders can be executed, spec has {} spatial dims", self.spatial_rank()) });
        }
        Ok(shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dcgan_dims() {
        let shapes = EncoderSpec::dcgan(1).propagate().unwrap();
        let units: Vec<_> = shapes.iter().map(|s| s.channels).collect();
        assert_eq!(units, vec![32, 64, 128, 64]);
        let dims: Vec<_> = shapes.iter().map(|s| s.spatial.clone()).collect();
        assert_eq!(dims, vec![vec![16, 16], vec![8, 8], vec![4, 4], vec![1, 1]]);
        assert_eq!(shapes[2].flat_len(), 2048);
    }

    #[test]
    fn alexnet3d_dims() {
        let spec = EncoderSpec::alexnet3d();
        let shapes = spec.propagate().unwrap();
        let units: Vec<_> = shapes.iter().map(|s| s.channels).collect();
        assert_eq!(units, vec![64, 128, 192, 192, 64]);
        assert_eq!(shapes[0].spatial, vec![62, 62, 62]);
        assert_eq!(shapes[0].flat_len(), 64 * 62 * 62 * 62);
        assert_eq!(spec.representation_dim, 64);
        assert!(matches!(spec.validate_executable(), Err(Error::Spec { layer: 0, .. })));
    }

    #[test]
    fn mismatch_names_the_layer() {
        let mut spec = EncoderSpec::dcgan(3);
        spec.layers[2].expected_output = Some(vec![5, 5]);
        assert!(matches!(spec.propagate(), Err(Error::Spec { layer: 3, .. })));

        let mut spec = EncoderSpec::dcgan(3);
        spec.input_shape = vec![3, 8, 8];
        assert!(matches!(spec.propagate(), Err(Error::Spec { layer: 1, .. })));

        let mut spec = EncoderSpec::dcgan(3);
        spec.representation_dim = 63;
        assert!(matches!(spec.propagate(), Err(Error::Spec { layer: 4, .. })));

        let mut spec = EncoderSpec::dcgan(3);
        spec.layers[1].kernel = vec![4];
        assert!(matches!(spec.propagate(), Err(Error::Spec { layer: 2, .. })));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = EncoderSpec::alexnet3d();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<EncoderSpec>(&json).unwrap(), spec);
    }
}
