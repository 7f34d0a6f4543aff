use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datasets::SingleView;
use crate::encoders::TrainedModel;
use crate::error::{Error, Result};

/// L2-regularized multinomial logistic regression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Inverse regularization strength: the objective is `Σ CE + ‖W‖² / (2C)`.
    pub c: f64,
    pub max_iter: u64,
    /// Per-feature standardization with train-split mean and std.
    pub standardize: bool,
    /// Stop once the gradient norm of the per-sample-mean objective falls below this.
    pub tol_grad: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { c: 1.0, max_iter: 1000, standardize: true, tol_grad: 1e-6, memory: 10 }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config("probe.c", format!("must be positive, got {}", self.c)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("probe.max_iter", "must be positive"));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::config("probe.tol_grad", "must be positive"));
        }
        if self.memory == 0 {
            return Err(Error::config("probe.memory", "must be positive"));
        }
        Ok(())
    }
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    classes: usize,
    /// Weight on `‖W‖² / 2` after dividing the objective by `n`.
    alpha: f64,
}

impl Problem<'_> {
    fn unpack(&self, p: &[f64]) -> (Array2<f64>, Array1<f64>) {
        let (k, d) = (self.classes, self.x.ncols());
        let w = Array2::from_shape_vec((k, d), p[..k * d].to_vec()).expect("parameter length");
        (w, Array1::from(p[k * d..].to_vec()))
    }

    fn evaluate(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let n = self.x.nrows() as f64;
        let (w, b) = self.unpack(p);
        let mut logits = self.x.dot(&w.t());
        logits += &b;
        let mut loss = 0.0;
        for (mut row, &y) in logits.rows_mut().into_iter().zip(self.y) {
            let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            row.mapv_inplace(|v| (v - lse).exp());
            row[y] -= 1.0;
        }
        let reg = 0.5 * self.alpha * w.iter().map(|v| v * v).sum::<f64>();
        logits /= n;
        let gw = logits.t().dot(&self.x) + &w * self.alpha;
        let gb = logits.sum_axis(Axis(0));
        (loss / n + reg, gw.iter().chain(gb.iter()).copied().collect())
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.evaluate(p).0)
    }
}

impl Gradient for Problem<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.evaluate(p).1)
    }
}

/// A fitted multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub iterations: u64,
    pub converged: bool,
}

fn to_f64(x: ArrayView2<f32>) -> Array2<f64> {
    x.mapv(|v| v as f64)
}

impl LogisticProbe {
    /// Fits on rows of `x` with labels `y` in `0..classes`.
    pub fn fit(x: ArrayView2<f32>, y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        cfg.validate()?;
        if x.nrows() != y.len() || y.is_empty() {
            return Err(Error::Shape(format!("{} feature rows for {} labels", x.nrows(), y.len())));
        }
        if let Some(bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidInput(format!("label {bad} outside [0, {classes})")));
        }
        if y.iter().all(|&l| l == y[0]) {
            return Err(Error::InvalidInput(format!("probe training split has a single class ({})", y[0])));
        }
        let mut xs = to_f64(x);
        let d = xs.ncols();
        let (mean, scale) = if cfg.standardize {
            let mean = xs.mean_axis(Axis(0)).expect("nonempty");
            let std = xs.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
            (mean, std)
        } else {
            (Array1::zeros(d), Array1::ones(d))
        };
        xs -= &mean;
        xs /= &scale;
        let problem = Problem { x: xs.view(), y, classes, alpha: 1.0 / (cfg.c * y.len() as f64) };
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), cfg.memory)
            .with_tolerance_grad(cfg.tol_grad)
            .map_err(|e| Error::Probe(e.to_string()))?;
        let init = vec![0.0; classes * d + classes];
        let res = Executor::new(problem, solver)
            .configure(|s| s.param(init).max_iters(cfg.max_iter))
            .run()
            .map_err(|e| Error::Probe(e.to_string()))?;
        let state = res.state();
        let converged = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
        let iterations = state.get_iter();
        let best = state.get_best_param().ok_or_else(|| Error::Probe("solver returned no parameters".into()))?;
        let weights = Array2::from_shape_vec((classes, d), best[..classes * d].to_vec()).expect("parameter length");
        let bias = Array1::from(best[classes * d..].to_vec());
        Ok(LogisticProbe { weights, bias, mean, scale, iterations, converged })
    }

    pub fn decision(&self, x: ArrayView2<f32>) -> Array2<f64> {
        let mut xs = to_f64(x);
        xs -= &self.mean;
        xs /= &self.scale;
        let mut logits = xs.dot(&self.weights.t());
        logits += &self.bias;
        logits
    }

    /// Most probable class per row (first maximum wins).
    pub fn predict(&self, x: ArrayView2<f32>) -> Vec<usize> {
        self.decision(x).rows().into_iter().map(argmax).collect()
    }

    pub fn score(&self, x: ArrayView2<f32>, y: &[usize]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len().max(1) as f64
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    row.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub iterations: u64,
    pub converged: bool,
    pub hash_before: String,
    pub hash_after: String,
    pub config: ProbeConfig,
}

/// Fits a logistic probe on frozen representations of `train` and returns
/// its accuracy on `test`.
pub fn linear_probe_transfer(model: &TrainedModel, train: &SingleView, test: &SingleView, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let hash_before = model.parameter_hash();
    let z_train = model.represent(train)?;
    let z_test = model.represent(test)?;
    let classes = train.class_count().max(test.class_count());
    let probe = LogisticProbe::fit(z_train.view(), &train.labels, classes, cfg)?;
    let hash_after = model.parameter_hash();
    if hash_after != hash_before {
        return Err(Error::Probe("encoder parameters changed during probing".into()));
    }
    Ok(ProbeReport {
        accuracy: probe.score(z_test.view(), &test.labels),
        train_accuracy: probe.score(z_train.view(), &train.labels),
        iterations: probe.iterations,
        converged: probe.converged,
        hash_before,
        hash_after,
        config: *cfg,
    })
}
