//! Minimal layer library with explicit backward passes.
//!
//! Convolutional activations travel as [`FeatureMap`]s in channel-major
//! layout: a `C × (B·H·W)` matrix whose column index is `(b·H + y)·W + x`.
//! This makes convolution a single GEMM over the whole batch and makes
//! per-channel statistics contiguous rows.

mod conv;
mod linear;
mod norm;
mod optim;
mod pool;

use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use conv::{Conv2d, ConvCache};
pub use linear::{Linear, LinearCache};
pub use norm::{BatchNorm2d, BatchNormCache};
pub use optim::{Optimizer, OptimizerKind};
pub use pool::{MaxPool2d, MaxPoolCache};

use crate::rng::Rng;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
}

impl Param {
    pub fn new(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn normal(shape: &[usize], mean: f32, std: f32, rng: &mut Rng) -> Self {
        let d = Normal::new(mean, std).expect("finite std");
        Self::new(ArrayD::from_shape_simple_fn(IxDyn(shape), || d.sample(rng)))
    }

    pub fn uniform(shape: &[usize], bound: f32, rng: &mut Rng) -> Self {
        Self::new(ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-bound..=bound)))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Pointwise nonlinearity applied after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    Relu,
    LeakyRelu(f32),
}

impl Nonlinearity {
    pub fn apply(self, values: &mut [f32]) {
        match self {
            Nonlinearity::Identity => {}
            Nonlinearity::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
            Nonlinearity::LeakyRelu(slope) => values.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= slope
                }
            }),
        }
    }

    /// Multiplies `grad` in place by the derivative evaluated at the *output* `out`.
    pub fn backward(self, out: &[f32], grad: &mut [f32]) {
        match self {
            Nonlinearity::Identity => {}
            Nonlinearity::Relu => grad.iter_mut().zip(out).for_each(|(g, &o)| {
                if o <= 0.0 {
                    *g = 0.0
                }
            }),
            Nonlinearity::LeakyRelu(slope) => grad.iter_mut().zip(out).for_each(|(g, &o)| {
                if o < 0.0 {
                    *g *= slope
                }
            }),
        }
    }
}

/// Batch of channel-major 2-D feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// `C × (B·H·W)`
    pub data: Array2<f32>,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureMap {
    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Same geometry, new values.
    pub fn with_data(&self, data: Array2<f32>) -> Self {
        FeatureMap { data, batch: self.batch, height: self.height, width: self.width }
    }

    /// From a `B × C × H × W` batch.
    pub fn from_nchw(x: &ndarray::Array4<f32>) -> Self {
        let (b, c, h, w) = x.dim();
        let data = x
            .view()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, b * h * w))
            .expect("contiguous");
        FeatureMap { data, batch: b, height: h, width: w }
    }

    /// Per-sample flattening in `(c, y, x)` order: `B × (C·H·W)`.
    pub fn flatten_samples(&self) -> Array2<f32> {
        let (c, hw) = (self.channels(), self.height * self.width);
        let mut out = Array2::zeros((self.batch, c * hw));
        for ch in 0..c {
            let row = self.data.row(ch);
            for b in 0..self.batch {
                for p in 0..hw {
                    out[[b, ch * hw + p]] = row[b * hw + p];
                }
            }
        }
        out
    }

    /// Inverse of [`flatten_samples`](Self::flatten_samples).
    pub fn unflatten_samples(flat: &Array2<f32>, channels: usize, height: usize, width: usize) -> Self {
        let batch = flat.nrows();
        let hw = height * width;
        let mut data = Array2::zeros((channels, batch * hw));
        for ch in 0..channels {
            for b in 0..batch {
                for p in 0..hw {
                    data[[ch, b * hw + p]] = flat[[b, ch * hw + p]];
                }
            }
        }
        FeatureMap { data, batch, height, width }
    }

    /// Mean over spatial positions: `B × C`.
    pub fn global_average(&self) -> Array2<f32> {
        let hw = self.height * self.width;
        let mut out = Array2::zeros((self.batch, self.channels()));
        for (ch, row) in self.data.rows().into_iter().enumerate() {
            for b in 0..self.batch {
                out[[b, ch]] = row.slice(ndarray::s![b * hw..(b + 1) * hw]).sum() / hw as f32;
            }
        }
        out
    }

    /// Adjoint of [`global_average`](Self::global_average).
    pub fn global_average_backward(grad: &Array2<f32>, height: usize, width: usize) -> Self {
        let (batch, channels) = grad.dim();
        let hw = height * width;
        let scale = 1.0 / hw as f32;
        let data = Array2::from_shape_fn((channels, batch * hw), |(ch, col)| grad[[col / hw, ch]] * scale);
        FeatureMap { data, batch, height, width }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn flatten_round_trip_and_layout() {
        let x = Array4::from_shape_fn((2, 3, 2, 2), |(b, c, y, x)| (b * 100 + c * 10 + y * 2 + x) as f32);
        let fm = FeatureMap::from_nchw(&x);
        let flat = fm.flatten_samples();
        assert_eq!(flat.dim(), (2, 12));
        // sample 1, channel 2, y 1, x 0
        assert_eq!(flat[[1, 2 * 4 + 2]], 122.0);
        let back = FeatureMap::unflatten_samples(&flat, 3, 2, 2);
        assert_eq!(back, fm);
    }

    #[test]
    fn nonlinearity_gradients() {
        let mut v = vec![-1.0, 0.5];
        Nonlinearity::LeakyRelu(0.2).apply(&mut v);
        assert_eq!(v, vec![-0.2, 0.5]);
        let mut g = vec![1.0, 1.0];
        Nonlinearity::LeakyRelu(0.2).backward(&v, &mut g);
        assert_eq!(g, vec![0.2, 1.0]);
        let mut r = vec![-1.0, 2.0];
        Nonlinearity::Relu.apply(&mut r);
        let mut g = vec![3.0, 3.0];
        Nonlinearity::Relu.backward(&r, &mut g);
        assert_eq!(g, vec![0.0, 3.0]);
    }
}
