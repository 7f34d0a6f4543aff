use ndarray::{Array2, ArrayView2, Axis};

use super::{FeatureMap, Param};
use crate::rng::Rng;

/// 2-D convolution lowered to one GEMM per batch via im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `out × in × kh × kw`
    pub weight: Param,
    pub bias: Option<Param>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

/// Saved for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Array2<f32>,
    in_batch: usize,
    in_h: usize,
    in_w: usize,
}

impl Conv2d {
    /// Weights `N(0, std)`, bias zero when present.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
        std: f32,
        rng: &mut Rng,
    ) -> Self {
        Self {
            weight: Param::normal(&[out_channels, in_channels, kernel.0, kernel.1], 0.0, std, rng),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let dim = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p).checked_sub(k).map(|v| v / s + 1);
        Some((dim(h, self.kernel.0, self.stride.0, self.padding.0)?, dim(w, self.kernel.1, self.stride.1, self.padding.1)?))
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f32> {
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        self.weight.value.view().into_shape_with_order((self.out_channels, k)).expect("contiguous weight")
    }

    fn im2col(&self, x: &FeatureMap, oh: usize, ow: usize) -> Array2<f32> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = (self.padding.0 as isize, self.padding.1 as isize);
        let (h, w, b) = (x.height, x.width, x.batch);
        let mut cols = Array2::<f32>::zeros((self.in_channels * kh * kw, b * oh * ow));
        for c in 0..self.in_channels {
            let src = x.data.row(c);
            let src = src.as_slice().expect("row-major feature map");
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut row = cols.row_mut((c * kh + ky) * kw + kx);
                    let dst = row.as_slice_mut().expect("row-major cols");
                    for bi in 0..b {
                        for oy in 0..oh {
                            let iy = (oy * sh) as isize + ky as isize - ph;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_row = (bi * h + iy as usize) * w;
                            let dst_row = (bi * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * sw) as isize + kx as isize - pw;
                                if ix >= 0 && ix < w as isize {
                                    dst[dst_row + ox] = src[src_row + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f32>, b: usize, h: usize, w: usize, oh: usize, ow: usize) -> Array2<f32> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = (self.padding.0 as isize, self.padding.1 as isize);
        let mut out = Array2::<f32>::zeros((self.in_channels, b * h * w));
        for c in 0..self.in_channels {
            let mut dst_row = out.row_mut(c);
            let dst = dst_row.as_slice_mut().expect("row-major");
            for ky in 0..kh {
                for kx in 0..kw {
                    let src_row = cols.row((c * kh + ky) * kw + kx);
                    let src = src_row.as_slice().expect("row-major cols");
                    for bi in 0..b {
                        for oy in 0..oh {
                            let iy = (oy * sh) as isize + ky as isize - ph;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let d0 = (bi * h + iy as usize) * w;
                            let s0 = (bi * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * sw) as isize + kx as isize - pw;
                                if ix >= 0 && ix < w as isize {
                                    dst[d0 + ix as usize] += src[s0 + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Forward pass. Panics if the input does not fit the kernel; encoders
    /// validate geometry before building layers.
    pub fn forward(&self, x: &FeatureMap) -> (FeatureMap, ConvCache) {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let (oh, ow) = self.output_hw(x.height, x.width).expect("input smaller than kernel");
        let cols = self.im2col(x, oh, ow);
        let mut out = self.weight_matrix().dot(&cols);
        if let Some(bias) = &self.bias {
            for (mut row, &bv) in out.rows_mut().into_iter().zip(bias.value.iter()) {
                row += bv;
            }
        }
        let cache = ConvCache { cols, in_batch: x.batch, in_h: x.height, in_w: x.width };
        (FeatureMap { data: out, batch: x.batch, height: oh, width: ow }, cache)
    }

    /// Accumulates parameter gradients; returns the input gradient when `need_input_grad`.
    pub fn backward(&mut self, grad_out: &FeatureMap, cache: &ConvCache, need_input_grad: bool) -> Option<FeatureMap> {
        let gw = grad_out.data.dot(&cache.cols.t());
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        {
            let mut wg = self.weight.grad.view_mut().into_shape_with_order((self.out_channels, k)).expect("contiguous");
            wg += &gw;
        }
        if let Some(bias) = &mut self.bias {
            let gb = grad_out.data.sum_axis(Axis(1));
            bias.grad.iter_mut().zip(gb.iter()).for_each(|(g, v)| *g += v);
        }
        if !need_input_grad {
            return None;
        }
        let gcols = self.weight_matrix().t().dot(&grad_out.data);
        let data = self.col2im(&gcols, cache.in_batch, cache.in_h, cache.in_w, grad_out.height, grad_out.width);
        Some(FeatureMap { data, batch: cache.in_batch, height: cache.in_h, width: cache.in_w })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array4;

    /// Direct nested-loop convolution.
    fn naive(conv: &Conv2d, x: &Array4<f32>) -> Array4<f32> {
        let (b, _, h, w) = x.dim();
        let (oh, ow) = conv.output_hw(h, w).unwrap();
        let mut out = Array4::zeros((b, conv.out_channels, oh, ow));
        for bi in 0..b {
            for o in 0..conv.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |p| p.value[[o]]);
                        for c in 0..conv.in_channels {
                            for ky in 0..conv.kernel.0 {
                                for kx in 0..conv.kernel.1 {
                                    let iy = (oy * conv.stride.0 + ky) as isize - conv.padding.0 as isize;
                                    let ix = (ox * conv.stride.1 + kx) as isize - conv.padding.1 as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += conv.weight.value[[o, c, ky, kx]] * x[[bi, c, iy as usize, ix as usize]];
                                    }
                                }
                            }
                        }
                        out[[bi, o, oy, ox]] = acc;
                    }
                }
            }
        }
        out
    }

    fn to_nchw(fm: &FeatureMap) -> Array4<f32> {
        let c = fm.channels();
        fm.data
            .clone()
            .into_shape_with_order((c, fm.batch, fm.height, fm.width))
            .unwrap()
            .permuted_axes([1, 0, 2, 3])
            .as_standard_layout()
            .into_owned()
    }

    #[test]
    fn matches_naive_convolution() {
        let mut r = rng::stream(1, "conv-test");
        let mut conv = Conv2d::new(3, 4, (4, 4), (2, 2), (1, 1), true, 0.3, &mut r);
        conv.bias.as_mut().unwrap().value.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.1);
        let x = Array4::from_shape_fn((2, 3, 8, 6), |(b, c, y, x)| ((b * 7 + c * 5 + y * 3 + x) % 11) as f32 / 11.0 - 0.4);
        let (out, _) = conv.forward(&FeatureMap::from_nchw(&x));
        let expected = naive(&conv, &x);
        let got = to_nchw(&out);
        assert_eq!(got.dim(), expected.dim());
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::stream(2, "conv-grad");
        let mut conv = Conv2d::new(2, 3, (3, 3), (2, 1), (1, 0), true, 0.5, &mut r);
        let x = Array4::from_shape_fn((2, 2, 5, 4), |(b, c, y, x)| ((b + 2 * c + 3 * y + 5 * x) % 7) as f32 / 7.0 - 0.5);
        // loss = sum(out * coeff) with fixed coefficients
        let (out, cache) = conv.forward(&FeatureMap::from_nchw(&x));
        let coeff = Array2::from_shape_fn(out.data.dim(), |(i, j)| ((i * 13 + j * 7) % 5) as f32 - 2.0);
        let loss = |c: &Conv2d, x: &Array4<f32>| -> f64 {
            let (o, _) = c.forward(&FeatureMap::from_nchw(x));
            o.data.iter().zip(coeff.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let grad_out = FeatureMap { data: coeff.clone(), batch: out.batch, height: out.height, width: out.width };
        let gx = conv.backward(&grad_out, &cache, true).unwrap();
        let gx = to_nchw(&gx);
        let eps = 1e-2f32;
        for idx in [(0, 0, 0, 0), (1, 1, 2, 3), (0, 1, 4, 1)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps as f64);
            assert!((fd - gx[idx] as f64).abs() < 1e-3, "dx{idx:?}: {fd} vs {}", gx[idx]);
        }
        for idx in [[0, 0, 0, 0], [2, 1, 2, 1], [1, 0, 1, 2]] {
            let analytic = conv.weight.grad[idx.as_slice()] as f64;
            let mut cp = conv.clone();
            cp.weight.value[idx.as_slice()] += eps;
            let mut cm = conv.clone();
            cm.weight.value[idx.as_slice()] -= eps;
            let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps as f64);
            assert!((fd - analytic).abs() < 1e-3, "dw{idx:?}: {fd} vs {analytic}");
        }
        let gb = conv.bias.as_ref().unwrap().grad[[1]] as f64;
        let expected_gb: f64 = coeff.row(1).iter().map(|&v| v as f64).sum();
        assert!((gb - expected_gb).abs() < 1e-4);
    }
}
