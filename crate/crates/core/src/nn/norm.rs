use ndarray::{Array1, Array2, Axis};

use super::{FeatureMap, Param};
use crate::rng::Rng;

/// Per-channel batch normalisation over `(B, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    pub momentum: f32,
    pub eps: f32,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Array2<f32>,
    inv_std: Array1<f32>,
}

impl BatchNorm2d {
    /// `γ ~ N(1, gamma_std)`, `β = 0`.
    pub fn new(channels: usize, gamma_std: f32, rng: &mut Rng) -> Self {
        Self {
            gamma: Param::normal(&[channels], 1.0, gamma_std, rng),
            beta: Param::zeros(&[channels]),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    fn affine(&self, mut x_hat: Array2<f32>) -> Array2<f32> {
        for (c, mut row) in x_hat.rows_mut().into_iter().enumerate() {
            let (g, b) = (self.gamma.value[[c]], self.beta.value[[c]]);
            row.mapv_inplace(|v| v * g + b);
        }
        x_hat
    }

    /// Inference with running statistics.
    pub fn infer(&self, x: &FeatureMap) -> FeatureMap {
        let mut x_hat = x.data.clone();
        for (c, mut row) in x_hat.rows_mut().into_iter().enumerate() {
            let (m, s) = (self.running_mean[c], 1.0 / (self.running_var[c] + self.eps).sqrt());
            row.mapv_inplace(|v| (v - m) * s);
        }
        x.with_data(self.affine(x_hat))
    }

    /// Training-mode forward with batch statistics; updates running stats.
    pub fn forward(&mut self, x: &FeatureMap) -> (FeatureMap, BatchNormCache) {
        let n = x.data.ncols();
        let mean = x.data.mean_axis(Axis(1)).expect("non-empty batch");
        let mut x_hat = x.data.clone();
        let mut inv_std = Array1::zeros(x.channels());
        for (c, mut row) in x_hat.rows_mut().into_iter().enumerate() {
            row -= mean[c];
            let var = row.iter().map(|v| v * v).sum::<f32>() / n as f32;
            inv_std[c] = 1.0 / (var + self.eps).sqrt();
            row *= inv_std[c];
            let unbiased = if n > 1 { var * n as f32 / (n - 1) as f32 } else { var };
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
        }
        let out = x.with_data(self.affine(x_hat.clone()));
        (out, BatchNormCache { x_hat, inv_std })
    }

    pub fn backward(&mut self, grad_out: &FeatureMap, cache: &BatchNormCache) -> FeatureMap {
        let n = grad_out.data.ncols() as f32;
        let mut gx = Array2::zeros(grad_out.data.raw_dim());
        for c in 0..self.channels() {
            let g = grad_out.data.row(c);
            let xh = cache.x_hat.row(c);
            let sum_g: f32 = g.sum();
            let sum_gx: f32 = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
            self.gamma.grad[[c]] += sum_gx;
            self.beta.grad[[c]] += sum_g;
            let k = self.gamma.value[[c]] * cache.inv_std[c] / n;
            let mut out = gx.row_mut(c);
            for ((o, &gi), &xi) in out.iter_mut().zip(g.iter()).zip(xh.iter()) {
                *o = k * (n * gi - sum_g - xi * sum_gx);
            }
        }
        grad_out.with_data(gx)
    }
}
