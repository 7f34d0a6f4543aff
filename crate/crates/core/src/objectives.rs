//! Loss algebra: two-head supervised cross-entropy, the symmetric NCE
//! contrastive loss over a tanh-clipped scaled dot-product critic, and the
//! λ-weighted combination. Everything is `f64` and returns analytic
//! gradients alongside values.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::encoders::{ProjectionHeadSpec, ProjectionKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NceScope {
    /// Negatives are the other pairs of the current minibatch.
    #[default]
    Minibatch,
    /// The whole training pair set forms one batch each step.
    FullSet,
}

fn default_clip() -> f64 {
    10.0
}
fn default_penalty() -> f64 {
    4e-2
}
fn default_lambda() -> f64 {
    0.75
}
fn default_head() -> ProjectionHeadSpec {
    ProjectionHeadSpec { kind: ProjectionKind::Identity, width: 64 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Multiplier on the dot product; `None` means `1/√d`.
    #[serde(default)]
    pub critic_scale: Option<f64>,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
    #[serde(default = "default_head")]
    pub projection_head: ProjectionHeadSpec,
    #[serde(default)]
    pub nce_scope: NceScope,
    /// Conventional InfoNCE denominator (positive included).
    #[serde(default)]
    pub include_positive_in_denominator: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: default_lambda(),
            critic_scale: None,
            clip: default_clip(),
            penalty_weight: default_penalty(),
            projection_head: default_head(),
            nce_scope: NceScope::Minibatch,
            include_positive_in_denominator: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if let Some(s) = self.critic_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("objective.critic_scale", format!("must be positive, got {s}")));
            }
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::config("objective.clip", format!("must be positive, got {}", self.clip)));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::config("objective.penalty_weight", format!("must be non-negative, got {}", self.penalty_weight)));
        }
        Ok(())
    }

    pub fn scale_for(&self, dim: usize) -> f64 {
        self.critic_scale.unwrap_or(1.0 / (dim as f64).sqrt())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config("objective.lambda", format!("must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Critic scores between two embedding batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    /// `⟨h_a, h_b⟩ · scale`
    pub raw: Array2<f64>,
    /// `c · tanh(raw / c)`
    pub clipped: Array2<f64>,
    pub clip: f64,
    pub include_positive: bool,
}

impl ScoreMatrix {
    /// Wraps already-clipped scores (no critic), mainly for direct loss evaluation.
    pub fn from_scores(scores: Array2<f64>, include_positive: bool) -> Self {
        ScoreMatrix { raw: scores.clone(), clipped: scores, clip: f64::INFINITY, include_positive }
    }

    pub fn n(&self) -> usize {
        self.clipped.nrows()
    }

    pub fn transposed(&self) -> Self {
        ScoreMatrix {
            raw: self.raw.t().to_owned(),
            clipped: self.clipped.t().to_owned(),
            clip: self.clip,
            include_positive: self.include_positive,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy over rows and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if n == 0 || labels.len() != n {
        return Err(Error::Shape(format!("{n} logit rows for {} labels", labels.len())));
    }
    let mut grad = Array2::zeros((n, k));
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        if y >= k {
            return Err(Error::InvalidInput(format!("label {y} out of range for {k} classes")));
        }
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[y];
        for j in 0..k {
            grad[[i, j]] = ((row[j] - lse).exp() - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

#[derive(Debug, Clone)]
pub struct SupervisedTerms {
    pub loss: f64,
    pub ce_i: f64,
    pub ce_j: f64,
    pub grad_i: Array2<f64>,
    pub grad_j: Array2<f64>,
}

/// `CE(logits_i, y) + CE(logits_j, y)`, each a batch mean, with gradients.
pub fn supervised_terms(logits_i: ArrayView2<f64>, logits_j: ArrayView2<f64>, labels: &[usize]) -> Result<SupervisedTerms> {
    if logits_i.dim() != logits_j.dim() {
        return Err(Error::Shape(format!("logit shapes {:?} and {:?} differ", logits_i.dim(), logits_j.dim())));
    }
    let (ce_i, grad_i) = cross_entropy(logits_i, labels)?;
    let (ce_j, grad_j) = cross_entropy(logits_j, labels)?;
    Ok(SupervisedTerms { loss: ce_i + ce_j, ce_i, ce_j, grad_i, grad_j })
}

pub fn supervised_loss(logits_i: ArrayView2<f64>, logits_j: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(supervised_terms(logits_i, logits_j, labels)?.loss)
}

/// Raw and clipped critic scores of all `(a, b)` row pairs.
pub fn critic_scores(h_i: ArrayView2<f64>, h_j: ArrayView2<f64>, cfg: &ObjectiveConfig) -> Result<ScoreMatrix> {
    if h_i.dim() != h_j.dim() {
        return Err(Error::Shape(format!("embedding shapes {:?} and {:?} differ", h_i.dim(), h_j.dim())));
    }
    let (n, d) = h_i.dim();
    let scale = cfg.scale_for(d);
    // explicit loop keeps each entry's summation order independent of argument order
    let raw = Array2::from_shape_fn((n, n), |(a, b)| (0..d).map(|k| h_i[[a, k]] * h_j[[b, k]]).sum::<f64>() * scale);
    let c = cfg.clip;
    let clipped = raw.mapv(|s| c * (s / c).tanh());
    Ok(ScoreMatrix { raw, clipped, clip: c, include_positive: cfg.include_positive_in_denominator })
}

fn denominator_members(n: usize, row: usize, include_positive: bool) -> impl Iterator<Item = usize> + Clone {
    (0..n).filter(move |&m| include_positive || m != row)
}

/// Row-direction NCE loss and its gradient w.r.t. the clipped scores.
pub fn nce_direction_with_grad(scores: &ScoreMatrix) -> Result<(f64, Array2<f64>)> {
    let a = &scores.clipped;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("score matrix is {:?}, must be square", a.dim())));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("NCE needs at least 2 pairs, got {n}")));
    }
    let mut grad = Array2::zeros((n, n));
    let mut loss = 0.0;
    for r in 0..n {
        let row = a.row(r);
        let members = denominator_members(n, r, scores.include_positive);
        let lse = log_sum_exp(members.clone().map(|m| row[m]));
        loss += lse - row[r];
        for m in members {
            grad[[r, m]] += (row[m] - lse).exp() / n as f64;
        }
        grad[[r, r]] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Mean over rows of `−log(exp(s_nn) / Σ_{m≠n} exp(s_nm))` on the clipped scores.
pub fn nce_direction_loss(scores: &ScoreMatrix) -> Result<f64> {
    Ok(nce_direction_with_grad(scores)?.0)
}

#[derive(Debug, Clone)]
pub struct ContrastiveTerms {
    pub loss: f64,
    pub i_to_j: f64,
    pub j_to_i: f64,
    pub penalty: f64,
    pub grad_i: Array2<f64>,
    pub grad_j: Array2<f64>,
}

/// Sum of squares visiting `(p, q)` and `(q, p)` together, so `S` and `Sᵀ` give identical bits.
fn symmetric_square_sum(s: &Array2<f64>) -> f64 {
    let n = s.nrows();
    let mut total = 0.0;
    for p in 0..n {
        total += s[[p, p]] * s[[p, p]];
        for q in p + 1..n {
            total += s[[p, q]] * s[[p, q]] + s[[q, p]] * s[[q, p]];
        }
    }
    total
}

/// `ℓ(S) + ℓ(Sᵀ) + penalty_weight · mean(raw²)` with gradients w.r.t. both embedding batches.
pub fn contrastive_terms(h_i: ArrayView2<f64>, h_j: ArrayView2<f64>, cfg: &ObjectiveConfig) -> Result<ContrastiveTerms> {
    let scores = critic_scores(h_i, h_j, cfg)?;
    let n = scores.n();
    let (i_to_j, g_fwd) = nce_direction_with_grad(&scores)?;
    let (j_to_i, g_bwd) = nce_direction_with_grad(&scores.transposed())?;
    let penalty = cfg.penalty_weight * symmetric_square_sum(&scores.raw) / (n * n) as f64;

    let c = scores.clip;
    let mut g_raw = g_fwd + &g_bwd.t();
    g_raw.zip_mut_with(&scores.clipped, |g, &cl| *g *= 1.0 - (cl / c) * (cl / c));
    let pen_scale = 2.0 * cfg.penalty_weight / (n * n) as f64;
    g_raw.zip_mut_with(&scores.raw, |g, &s| *g += pen_scale * s);

    let scale = cfg.scale_for(h_i.ncols());
    let grad_i = g_raw.dot(&h_j) * scale;
    let grad_j = g_raw.t().dot(&h_i) * scale;
    Ok(ContrastiveTerms { loss: i_to_j + j_to_i + penalty, i_to_j, j_to_i, penalty, grad_i, grad_j })
}

pub fn contrastive_loss(h_i: ArrayView2<f64>, h_j: ArrayView2<f64>, cfg: &ObjectiveConfig) -> Result<f64> {
    Ok(contrastive_terms(h_i, h_j, cfg)?.loss)
}

/// `λ·sup + (1−λ)·con`.
pub fn pxl_objective(sup: f64, con: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 1.0 {
        return Ok(sup);
    }
    if lambda == 0.0 {
        return Ok(con);
    }
    Ok(lambda * sup + (1.0 - lambda) * con)
}

#[derive(Debug, Clone)]
pub struct PxlTerms {
    pub loss: f64,
    pub supervised: SupervisedTerms,
    pub contrastive: ContrastiveTerms,
    pub lambda: f64,
}

impl PxlTerms {
    /// Gradients of the combined objective: `(logits_i, logits_j, h_i, h_j)`.
    pub fn scaled_grads(&self) -> [Array2<f64>; 4] {
        let l = self.lambda;
        [
            &self.supervised.grad_i * l,
            &self.supervised.grad_j * l,
            &self.contrastive.grad_i * (1.0 - l),
            &self.contrastive.grad_j * (1.0 - l),
        ]
    }
}

/// Full combined objective with all components and gradients.
pub fn pxl_terms(
    logits_i: ArrayView2<f64>,
    logits_j: ArrayView2<f64>,
    labels: &[usize],
    h_i: ArrayView2<f64>,
    h_j: ArrayView2<f64>,
    cfg: &ObjectiveConfig,
) -> Result<PxlTerms> {
    cfg.validate()?;
    let supervised = supervised_terms(logits_i, logits_j, labels)?;
    let contrastive = contrastive_terms(h_i, h_j, cfg)?;
    let loss = pxl_objective(supervised.loss, contrastive.loss, cfg.lambda)?;
    Ok(PxlTerms { loss, supervised, contrastive, lambda: cfg.lambda })
}
