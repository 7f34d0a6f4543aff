use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, LinearCache, Nonlinearity, Param};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Identity,
    Linear,
    Mlp1,
    Mlp2,
    Mlp3,
}

impl ProjectionKind {
    pub fn hidden_layers(self) -> usize {
        match self {
            ProjectionKind::Identity | ProjectionKind::Linear => 0,
            ProjectionKind::Mlp1 => 1,
            ProjectionKind::Mlp2 => 2,
            ProjectionKind::Mlp3 => 3,
        }
    }
}

/// Map from representation to the critic's embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionHeadSpec {
    pub kind: ProjectionKind,
    /// Hidden and output width; must equal the representation width.
    pub width: usize,
}

impl ProjectionHeadSpec {
    pub fn validate(&self, representation_dim: usize) -> Result<()> {
        if self.width != representation_dim {
            return Err(Error::config("objective.projection_head.width", format!("must equal the representation width {representation_dim}, got {}", self.width)));
        }
        Ok(())
    }
}

/// `identity`, a single linear map, or `k` hidden `Linear + ReLU` layers followed by a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub spec: ProjectionHeadSpec,
    layers: Vec<Linear>,
}

pub struct ProjectionTape {
    caches: Vec<LinearCache>,
    hidden_out: Vec<Array2<f32>>,
}

impl ProjectionHead {
    pub fn new(spec: ProjectionHeadSpec, rng: &mut Rng) -> Self {
        let n = match spec.kind {
            ProjectionKind::Identity => 0,
            k => k.hidden_layers() + 1,
        };
        let layers = (0..n).map(|_| Linear::new(spec.width, spec.width, rng)).collect();
        ProjectionHead { spec, layers }
    }

    pub fn infer(&self, z: &Array2<f32>) -> Array2<f32> {
        let mut h = z.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            h = l.infer(&h);
            if i < last {
                Nonlinearity::Relu.apply(h.as_slice_mut().expect("standard layout"));
            }
        }
        h
    }

    pub fn forward(&self, z: &Array2<f32>) -> (Array2<f32>, ProjectionTape) {
        let mut h = z.clone();
        let mut tape = ProjectionTape { caches: Vec::new(), hidden_out: Vec::new() };
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            let (out, cache) = l.forward(&h);
            h = out;
            tape.caches.push(cache);
            if i < last {
                Nonlinearity::Relu.apply(h.as_slice_mut().expect("standard layout"));
                tape.hidden_out.push(h.clone());
            }
        }
        (h, tape)
    }

    pub fn backward(&mut self, grad_h: &Array2<f32>, tape: &ProjectionTape) -> Array2<f32> {
        let mut g = grad_h.clone();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                Nonlinearity::Relu.backward(tape.hidden_out[i].as_slice().expect("standard layout"), g.as_slice_mut().expect("standard layout"));
            }
            g = self.layers[i].backward(&g, &tape.caches[i]);
        }
        g
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn layer_counts_and_identity() {
        let mut r = rng::stream(0, "proj");
        for (kind, n) in [(ProjectionKind::Identity, 0), (ProjectionKind::Linear, 1), (ProjectionKind::Mlp1, 2), (ProjectionKind::Mlp3, 4)] {
            let h = ProjectionHead::new(ProjectionHeadSpec { kind, width: 5 }, &mut r);
            assert_eq!(h.layers().len(), n);
            assert!(h.layers().iter().all(|l| l.in_features == 5 && l.out_features == 5));
        }
        let id = ProjectionHead::new(ProjectionHeadSpec { kind: ProjectionKind::Identity, width: 3 }, &mut r);
        let z = Array2::from_shape_fn((2, 3), |(i, j)| (i + j) as f32);
        assert_eq!(id.infer(&z), z);
        assert!(ProjectionHeadSpec { kind: ProjectionKind::Linear, width: 3 }.validate(4).is_err());
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut r = rng::stream(1, "proj");
        let mut head = ProjectionHead::new(ProjectionHeadSpec { kind: ProjectionKind::Mlp2, width: 4 }, &mut r);
        let z = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 5 + j * 3) % 7) as f32 / 3.0 - 1.0);
        let coeff = Array2::from_shape_fn((3, 4), |(i, j)| ((i + 2 * j) % 3) as f32 - 1.0);
        let loss = |h: &ProjectionHead, z: &Array2<f32>| -> f64 { h.infer(z).iter().zip(coeff.iter()).map(|(a, b)| (*a * *b) as f64).sum() };
        let (_, tape) = head.forward(&z);
        let gz = head.backward(&coeff, &tape);
        let eps = 1e-3f32;
        for idx in [(0, 0), (1, 2), (2, 3)] {
            let mut zp = z.clone();
            zp[idx] += eps;
            let mut zm = z.clone();
            zm[idx] -= eps;
            let fd = (loss(&head, &zp) - loss(&head, &zm)) / (2.0 * eps as f64);
            assert!((fd - gz[idx] as f64).abs() < 1e-3, "{fd} vs {}", gz[idx]);
        }
    }
}
