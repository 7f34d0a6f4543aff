use ndarray::Array2;

use super::FeatureMap;

/// Unpadded 2-D max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    argmax: Vec<u32>,
    in_h: usize,
    in_w: usize,
}

impl MaxPool2d {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = h.checked_sub(self.kernel.0)? / self.stride.0 + 1;
        let ow = w.checked_sub(self.kernel.1)? / self.stride.1 + 1;
        Some((oh, ow))
    }

    pub fn forward(&self, x: &FeatureMap) -> (FeatureMap, MaxPoolCache) {
        let (h, w, b) = (x.height, x.width, x.batch);
        let (oh, ow) = self.output_hw(h, w).expect("pool window larger than input");
        let mut out = Array2::<f32>::zeros((x.channels(), b * oh * ow));
        let mut argmax = vec![0u32; out.len()];
        for c in 0..x.channels() {
            let src = x.data.row(c);
            for bi in 0..b {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        let mut at = 0;
                        for ky in 0..self.kernel.0 {
                            for kx in 0..self.kernel.1 {
                                let i = (bi * h + oy * self.stride.0 + ky) * w + ox * self.stride.1 + kx;
                                if src[i] > best {
                                    best = src[i];
                                    at = i;
                                }
                            }
                        }
                        let o = (bi * oh + oy) * ow + ox;
                        out[[c, o]] = best;
                        argmax[c * b * oh * ow + o] = at as u32;
                    }
                }
            }
        }
        let cache = MaxPoolCache { argmax, in_h: h, in_w: w };
        (FeatureMap { data: out, batch: b, height: oh, width: ow }, cache)
    }

    pub fn backward(&self, grad_out: &FeatureMap, cache: &MaxPoolCache) -> FeatureMap {
        let cols_in = grad_out.batch * cache.in_h * cache.in_w;
        let cols_out = grad_out.data.ncols();
        let mut gx = Array2::<f32>::zeros((grad_out.channels(), cols_in));
        for c in 0..grad_out.channels() {
            for o in 0..cols_out {
                gx[[c, cache.argmax[c * cols_out + o] as usize]] += grad_out.data[[c, o]];
            }
        }
        FeatureMap { data: gx, batch: grad_out.batch, height: cache.in_h, width: cache.in_w }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn picks_window_maxima_and_routes_gradient() {
        let x = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, y, x)| (y * 4 + x) as f32);
        let pool = MaxPool2d { kernel: (2, 2), stride: (2, 2) };
        let (out, cache) = pool.forward(&FeatureMap::from_nchw(&x));
        assert_eq!(out.data.row(0).to_vec(), vec![5.0, 7.0, 13.0, 15.0]);
        let g = out.with_data(Array2::ones((1, 4)));
        let gx = pool.backward(&g, &cache);
        assert_eq!(gx.data.sum(), 4.0);
        assert_eq!(gx.data[[0, 5]], 1.0);
        assert_eq!(gx.data[[0, 0]], 0.0);
    }
}
