use ndarray::{Array2, ArrayView2, Axis};

use super::Param;
use crate::rng::Rng;

/// Fully connected layer `y = x·Wᵀ + b` on `B × in` batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out × in`
    pub weight: Param,
    pub bias: Param,
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Array2<f32>,
}

impl Linear {
    /// Weights and bias uniform in `±1/√in`.
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (in_features as f32).sqrt();
        Self {
            weight: Param::uniform(&[out_features, in_features], bound, rng),
            bias: Param::uniform(&[out_features], bound, rng),
            in_features,
            out_features,
        }
    }

    fn w(&self) -> ArrayView2<'_, f32> {
        self.weight.value.view().into_dimensionality().expect("2-D weight")
    }

    pub fn infer(&self, x: &Array2<f32>) -> Array2<f32> {
        assert_eq!(x.ncols(), self.in_features, "linear input width");
        let mut y = x.dot(&self.w().t());
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("1-D bias");
        y += &b;
        y
    }

    pub fn forward(&self, x: &Array2<f32>) -> (Array2<f32>, LinearCache) {
        (self.infer(x), LinearCache { input: x.clone() })
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, grad_out: &Array2<f32>, cache: &LinearCache) -> Array2<f32> {
        let gw = grad_out.t().dot(&cache.input);
        let mut wg = self.weight.grad.view_mut().into_dimensionality::<ndarray::Ix2>().expect("2-D");
        wg += &gw;
        let gb = grad_out.sum_axis(Axis(0));
        self.bias.grad.iter_mut().zip(gb.iter()).for_each(|(g, v)| *g += v);
        grad_out.dot(&self.w())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn forward_and_backward() {
        let mut r = rng::stream(3, "linear");
        let mut l = Linear::new(3, 2, &mut r);
        for v in l.weight.value.iter() {
            assert!(v.abs() <= 1.0 / 3f32.sqrt());
        }
        let x = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1.0, 0.0, 0.5]).unwrap();
        let (y, cache) = l.forward(&x);
        let w = l.weight.value.clone();
        let expected = w[[1, 0]] * -1.0 + w[[1, 2]] * 0.5 + l.bias.value[[1]];
        assert!((y[[1, 1]] - expected).abs() < 1e-6);

        let g = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let gx = l.backward(&g, &cache);
        assert!((gx[[1, 2]] - 2.0 * w[[1, 2]]).abs() < 1e-6);
        assert!((l.weight.grad[[1, 0]] - -2.0).abs() < 1e-6);
        assert!((l.bias.grad[[0]] - 1.0).abs() < 1e-6);
    }
}
