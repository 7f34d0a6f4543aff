use ndarray::{Array2, Array4};

use super::spec::{EncoderSpec, LayerShape, Normalization, TerminalPool};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, BatchNormCache, Conv2d, ConvCache, FeatureMap, MaxPool2d, MaxPoolCache, Nonlinearity, Param};
use crate::rng::Rng;

/// Standard deviation of the normal initialisers for conv weights and BN scales.
pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq)]
struct Block {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    act: Nonlinearity,
    pool: Option<MaxPool2d>,
}

struct BlockTape {
    conv: ConvCache,
    bn: Option<BatchNormCache>,
    act_out: Array2<f32>,
    pool: Option<MaxPoolCache>,
    out_hw: (usize, usize),
}

/// State recorded by a training-mode forward pass.
pub struct EncoderTape {
    blocks: Vec<BlockTape>,
    batch: usize,
    last: (usize, usize, usize),
}

/// Runtime 2-D convolutional encoder built from an [`EncoderSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: EncoderSpec,
    shapes: Vec<LayerShape>,
    blocks: Vec<Block>,
}

fn pair(v: &[usize]) -> (usize, usize) {
    (v[0], v[1])
}

impl Encoder {
    /// Conv weights `N(0, 0.02)`; BN scale `N(1, 0.02)`, shift 0; convs
    /// followed by BN carry no bias, others a zero bias.
    pub fn new(spec: &EncoderSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.validate_executable()?;
        let mut in_ch = spec.input_shape[0];
        let mut blocks = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let bn = l.normalization == Normalization::BatchNorm;
            let conv = Conv2d::new(in_ch, l.output_units, pair(&l.kernel), pair(&l.stride), pair(&l.padding), !bn, INIT_STD, rng);
            let bn = bn.then(|| BatchNorm2d::new(l.output_units, INIT_STD, rng));
            let pool = l.max_pool.as_ref().map(|p| MaxPool2d { kernel: pair(&p.kernel), stride: pair(&p.stride) });
            blocks.push(Block { conv, bn, act: l.nonlinearity, pool });
            in_ch = l.output_units;
        }
        Ok(Encoder { spec: spec.clone(), shapes, blocks })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layer_shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn layer_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn representation_dim(&self) -> usize {
        self.spec.representation_dim
    }

    /// Checks a `B × C × H × W` batch against the input shape.
    pub fn check_input(&self, x: &Array4<f32>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if [c, h, w] != self.spec.input_shape[..] {
            return Err(Error::InvalidInput(format!("batch has per-sample shape [{c}, {h}, {w}], encoder expects {:?}", self.spec.input_shape)));
        }
        Ok(())
    }

    fn represent(&self, last: &FeatureMap) -> Array2<f32> {
        match self.spec.pool {
            Some(TerminalPool::GlobalAverage) => last.global_average(),
            None => last.flatten_samples(),
        }
    }

    /// Eval-mode forward: running BN statistics. Returns the representation
    /// and, when `capture`, every layer's post-nonlinearity (post-pool) output.
    pub fn infer(&self, x: &Array4<f32>, capture: bool) -> Result<(Array2<f32>, Vec<FeatureMap>)> {
        self.check_input(x)?;
        let mut h = FeatureMap::from_nchw(x);
        let mut captured = Vec::new();
        for b in &self.blocks {
            let (mut y, _) = b.conv.forward(&h);
            if let Some(bn) = &b.bn {
                y = bn.infer(&y);
            }
            b.act.apply(y.data.as_slice_mut().expect("standard layout"));
            if let Some(p) = &b.pool {
                y = p.forward(&y).0;
            }
            if capture {
                captured.push(y.clone());
            }
            h = y;
        }
        Ok((self.represent(&h), captured))
    }

    /// Training-mode forward: batch statistics, running stats updated.
    pub fn forward_train(&mut self, x: &Array4<f32>) -> Result<(Array2<f32>, EncoderTape)> {
        self.check_input(x)?;
        let mut h = FeatureMap::from_nchw(x);
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let (mut y, conv) = b.conv.forward(&h);
            let bn = match &mut b.bn {
                Some(bn) => {
                    let (out, cache) = bn.forward(&y);
                    y = out;
                    Some(cache)
                }
                None => None,
            };
            b.act.apply(y.data.as_slice_mut().expect("standard layout"));
            let out_hw = (y.height, y.width);
            let act_out = y.data.clone();
            let pool = match &b.pool {
                Some(p) => {
                    let (out, cache) = p.forward(&y);
                    y = out;
                    Some(cache)
                }
                None => None,
            };
            tapes.push(BlockTape { conv, bn, act_out, pool, out_hw });
            h = y;
        }
        let last = (h.channels(), h.height, h.width);
        Ok((self.represent(&h), EncoderTape { blocks: tapes, batch: h.batch, last }))
    }

    /// Backpropagates `grad_z` (same shape as the representation), accumulating parameter gradients.
    pub fn backward(&mut self, tape: EncoderTape, grad_z: &Array2<f32>) {
        let (c, hh, ww) = tape.last;
        let mut g = match self.spec.pool {
            Some(TerminalPool::GlobalAverage) => FeatureMap::global_average_backward(grad_z, hh, ww),
            None => FeatureMap::unflatten_samples(grad_z, c, hh, ww),
        };
        debug_assert_eq!(g.batch, tape.batch);
        for (i, (b, t)) in self.blocks.iter_mut().zip(tape.blocks).enumerate().rev() {
            if let (Some(p), Some(cache)) = (&b.pool, &t.pool) {
                g = p.backward(&g, cache);
            }
            debug_assert_eq!((g.height, g.width), t.out_hw);
            b.act.backward(t.act_out.as_slice().expect("standard layout"), g.data.as_slice_mut().expect("standard layout"));
            if let (Some(bn), Some(cache)) = (&mut b.bn, &t.bn) {
                g = bn.backward(&g, cache);
            }
            match b.conv.backward(&g, &t.conv, i > 0) {
                Some(next) => g = next,
                None => break,
            }
        }
    }

    /// Trainable parameters in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            if let Some(bias) = &mut b.conv.bias {
                out.push(bias);
            }
            if let Some(bn) = &mut b.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Every persisted tensor (parameters and BN buffers) under a stable name.
    pub fn tensors(&self) -> Vec<(String, ndarray::ArrayD<f32>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("encoder.{}", i + 1);
            out.push((format!("{p}.conv.weight"), b.conv.weight.value.clone()));
            if let Some(bias) = &b.conv.bias {
                out.push((format!("{p}.conv.bias"), bias.value.clone()));
            }
            if let Some(bn) = &b.bn {
                out.push((format!("{p}.bn.gamma"), bn.gamma.value.clone()));
                out.push((format!("{p}.bn.beta"), bn.beta.value.clone()));
                out.push((format!("{p}.bn.running_mean"), bn.running_mean.clone().into_dyn()));
                out.push((format!("{p}.bn.running_var"), bn.running_var.clone().into_dyn()));
            }
        }
        out
    }

    /// Mutable views matching [`tensors`](Self::tensors), for loading.
    pub(crate) fn tensors_mut(&mut self) -> Vec<(String, ndarray::ArrayViewMutD<'_, f32>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("encoder.{}", i + 1);
            out.push((format!("{p}.conv.weight"), b.conv.weight.value.view_mut()));
            if let Some(bias) = &mut b.conv.bias {
                out.push((format!("{p}.conv.bias"), bias.value.view_mut()));
            }
            if let Some(bn) = &mut b.bn {
                out.push((format!("{p}.bn.gamma"), bn.gamma.value.view_mut()));
                out.push((format!("{p}.bn.beta"), bn.beta.value.view_mut()));
                out.push((format!("{p}.bn.running_mean"), bn.running_mean.view_mut().into_dyn()));
                out.push((format!("{p}.bn.running_var"), bn.running_var.view_mut().into_dyn()));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.conv.weight.len() + b.conv.bias.as_ref().map_or(0, Param::len) + b.bn.as_ref().map_or(0, |bn| 2 * bn.channels()))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::spec::ConvLayerSpec;
    use crate::rng;

    fn batch(b: usize, c: usize) -> Array4<f32> {
        Array4::from_shape_fn((b, c, 32, 32), |(i, ch, y, x)| (((i * 31 + ch * 7 + y * 3 + x) % 17) as f32) / 17.0)
    }

    #[test]
    fn dcgan_forward_shapes_and_capture() {
        let enc = Encoder::new(&EncoderSpec::dcgan(1), &mut rng::stream(0, "enc")).unwrap();
        let (z, acts) = enc.infer(&batch(4, 1), true).unwrap();
        assert_eq!(z.dim(), (4, 64));
        let dims: Vec<_> = acts.iter().map(|a| (a.channels(), a.height, a.width)).collect();
        assert_eq!(dims, vec![(32, 16, 16), (64, 8, 8), (128, 4, 4), (64, 1, 1)]);
        assert!(enc.infer(&batch(2, 3), false).is_err());
    }

    #[test]
    fn eval_forward_is_deterministic_and_seeded_init_is_reproducible() {
        let a = Encoder::new(&EncoderSpec::dcgan(3), &mut rng::stream(9, "enc")).unwrap();
        let b = Encoder::new(&EncoderSpec::dcgan(3), &mut rng::stream(9, "enc")).unwrap();
        assert_eq!(a, b);
        let x = batch(3, 3);
        assert_eq!(a.infer(&x, false).unwrap().0, a.infer(&x, false).unwrap().0);
        let c = Encoder::new(&EncoderSpec::dcgan(3), &mut rng::stream(10, "enc")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_weights_give_zero_representation() {
        let mut enc = Encoder::new(&EncoderSpec::dcgan(1), &mut rng::stream(1, "enc")).unwrap();
        for p in enc.params_mut() {
            p.value.fill(0.0);
        }
        let (z, _) = enc.infer(&batch(2, 1), false).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_input_through_nonlinearity() {
        let spec = EncoderSpec {
            name: "identity".into(),
            input_shape: vec![1, 3, 3],
            layers: vec![ConvLayerSpec {
                output_units: 1,
                kernel: vec![1, 1],
                stride: vec![1, 1],
                padding: vec![0, 0],
                nonlinearity: Nonlinearity::Relu,
                normalization: Normalization::None,
                max_pool: None,
                expected_output: Some(vec![3, 3]),
            }],
            pool: None,
            representation_dim: 9,
        };
        let mut enc = Encoder::new(&spec, &mut rng::stream(0, "id")).unwrap();
        enc.params_mut()[0].value.fill(1.0);
        let x = Array4::from_shape_fn((1, 1, 3, 3), |(_, _, y, x)| y as f32 - x as f32);
        let (z, _) = enc.infer(&x, false).unwrap();
        let expected: Vec<f32> = x.iter().map(|v| v.max(0.0)).collect();
        assert_eq!(z.row(0).to_vec(), expected);
    }

    #[test]
    fn backward_matches_finite_differences_on_small_net() {
        check_small_net(false, true);
        check_small_net(true, false);
        check_small_net(true, true);
    }

    fn check_small_net(with_pool: bool, with_bn: bool) {
        let spec = EncoderSpec {
            name: "tiny".into(),
            input_shape: vec![2, 6, 6],
            layers: vec![
                ConvLayerSpec {
                    output_units: 3,
                    kernel: vec![3, 3],
                    stride: vec![1, 1],
                    padding: vec![1, 1],
                    nonlinearity: Nonlinearity::LeakyRelu(0.1),
                    normalization: if with_bn { Normalization::BatchNorm } else { Normalization::None },
                    max_pool: with_pool.then(|| crate::encoders::MaxPoolSpec { kernel: vec![2, 2], stride: vec![2, 2] }),
                    expected_output: None,
                },
                ConvLayerSpec {
                    output_units: 2,
                    kernel: vec![2, 2],
                    stride: vec![1, 1],
                    padding: vec![0, 0],
                    nonlinearity: Nonlinearity::Identity,
                    normalization: Normalization::None,
                    max_pool: None,
                    expected_output: None,
                },
            ],
            pool: Some(TerminalPool::GlobalAverage),
            representation_dim: 2,
        };
        let mut r = rng::stream(4, "tiny");
        let mut enc = Encoder::new(&spec, &mut r).unwrap();
        for p in enc.params_mut() {
            p.value.mapv_inplace(|v| v * 10.0 + 0.05);
        }
        let x = Array4::from_shape_fn((3, 2, 6, 6), |(b, c, y, x)| (((b * 11 + c * 5 + y * 7 + x * 3) % 13) as f32) / 13.0 - 0.5);
        let coeff = Array2::from_shape_fn((3, 2), |(i, j)| (i as f32 + 1.0) * if j == 0 { 1.0 } else { -0.5 });
        let loss = |e: &Encoder| -> f64 {
            let (z, _) = e.clone().forward_train(&x).unwrap();
            z.iter().zip(coeff.iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
        };
        let (_, tape) = enc.clone().forward_train(&x).unwrap();
        let mut analytic = enc.clone();
        analytic.backward(tape, &coeff);
        let grads: Vec<_> = analytic.params_mut().into_iter().map(|p| p.grad.clone()).collect();
        let eps = 1e-3f32;
        let n_params = grads.len();
        for (pi, flat) in [(0usize, 0usize), (0, 17), (1, 2), (3, 5), (4, 1)] {
            let pi = pi % n_params;
            let flat = flat % grads[pi].len();
            let mut plus = enc.clone();
            plus.params_mut()[pi].value.as_slice_mut().unwrap()[flat] += eps;
            let mut minus = enc.clone();
            minus.params_mut()[pi].value.as_slice_mut().unwrap()[flat] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps as f64);
            let an = grads[pi].as_slice().unwrap()[flat] as f64;
            assert!((fd - an).abs() < 5e-3 * (1.0 + an.abs()), "pool {with_pool} bn {with_bn} param {pi}[{flat}]: fd {fd} vs {an}");
        }
    }
}
