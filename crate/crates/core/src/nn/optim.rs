use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Radam,
}

/// Adam, or rectified Adam (variance-rectified adaptive step, plain
/// momentum SGD while the variance estimate is unreliable).
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from each parameter's accumulated gradient. The
    /// parameter list must have the same order and shapes on every call.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        // (scale applied to m, whether to divide by sqrt(v))
        let (coef, adaptive) = match self.kind {
            OptimizerKind::Adam => (self.lr / bc1 * bc2.sqrt(), true),
            OptimizerKind::Radam => {
                let rho_inf = 2.0 / (1.0 - b2) - 1.0;
                let rho_t = rho_inf - 2.0 * t as f64 * b2.powi(t) / bc2;
                if rho_t > 5.0 {
                    let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt();
                    (self.lr * r / bc1 * bc2.sqrt(), true)
                } else {
                    (self.lr / bc1, false)
                }
            }
        };
        // epsilon is added to the bias-corrected sqrt(v); fold the correction in
        let eps = (self.eps * bc2.sqrt()) as f32;
        let (coef, b1f, b2f) = (coef as f32, b1 as f32, b2 as f32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|w, &g, m, v| {
                *m = b1f * *m + (1.0 - b1f) * g;
                *v = b2f * *v + (1.0 - b2f) * g * g;
                if adaptive {
                    *w -= coef * *m / (v.sqrt() + eps);
                } else {
                    *w -= coef * *m;
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    /// Scalar reference implementations written from the update rules.
    fn reference(kind: OptimizerKind, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut w, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            match kind {
                OptimizerKind::Adam => w -= lr * m_hat / (v_hat.sqrt() + eps),
                OptimizerKind::Radam => {
                    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
                    let rho_t = rho_inf - 2.0 * t as f64 * b2.powi(t) / (1.0 - b2.powi(t));
                    if rho_t > 5.0 {
                        let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt();
                        w -= lr * m_hat * r / (v_hat.sqrt() + eps);
                    } else {
                        w -= lr * m_hat;
                    }
                }
            }
        }
        w
    }

    #[test]
    fn matches_scalar_reference() {
        let grads: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        for kind in [OptimizerKind::Adam, OptimizerKind::Radam] {
            let mut p = Param::zeros(&[1]);
            let mut opt = Optimizer::new(kind, 0.01);
            for g in &grads {
                p.grad = ArrayD::from_elem(IxDyn(&[1]), *g as f32);
                opt.step(vec![&mut p]);
            }
            let expected = reference(kind, &grads, 0.01);
            assert!((p.value[[0]] as f64 - expected).abs() < 1e-5, "{kind:?}: {} vs {expected}", p.value[[0]]);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Radam] {
            let mut p = Param::new(ArrayD::from_elem(IxDyn(&[3]), 0.7));
            let mut opt = Optimizer::new(kind, 0.1);
            for _ in 0..10 {
                opt.step(vec![&mut p]);
            }
            assert!(p.value.iter().all(|&v| v == 0.7));
        }
    }
}
