use std::path::Path;

use ndarray::{Array2, ArrayD, ArrayView2, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::datasets::SingleView;
use crate::encoders::{extract_activations, ActivationMatrix, TrainedModel};
use crate::error::{Error, IoContext, Result};
use crate::rng;

/// `m × c × spatial...` to `m × (c·Πspatial)`, row-major: channel outermost,
/// then spatial axes in order.
pub fn flatten_activations(t: &ArrayD<f32>) -> Result<Array2<f32>> {
    if t.ndim() < 2 || t.shape()[0] == 0 {
        return Err(Error::Shape(format!("activation tensor {:?} needs a nonempty sample axis and at least one feature axis", t.shape())));
    }
    let m = t.shape()[0];
    let u = t.len() / m;
    let flat = t.as_standard_layout().into_owned();
    Ok(flat.into_shape_with_order((m, u)).expect("row-major length"))
}

/// Inverse of [`flatten_activations`] for per-sample shape `feature_shape`.
pub fn unflatten_activations(x: &Array2<f32>, feature_shape: &[usize]) -> Result<ArrayD<f32>> {
    if feature_shape.iter().product::<usize>() != x.ncols() {
        return Err(Error::Shape(format!("{} columns cannot form {:?}", x.ncols(), feature_shape)));
    }
    let mut dims = vec![x.nrows()];
    dims.extend(feature_shape);
    let flat = x.as_standard_layout().into_owned();
    Ok(flat.into_shape_with_order(IxDyn(&dims)).expect("length checked"))
}

/// Unbiased HSIC estimator on Gram matrices with their diagonals zeroed:
/// `[tr(K̃L̃) + 1ᵀK̃1·1ᵀL̃1/((n−1)(n−2)) − 2/(n−2)·1ᵀK̃L̃1] / (n(n−3))`.
/// Symmetric in its arguments bit for bit.
pub fn unbiased_hsic(k: ArrayView2<f64>, l: ArrayView2<f64>) -> Result<f64> {
    let n = k.nrows();
    if k.dim() != (n, n) || l.dim() != (n, n) {
        return Err(Error::Shape(format!("Gram matrices must be square and equal, got {:?} and {:?}", k.dim(), l.dim())));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!("unbiased HSIC needs n >= 4, got {n}")));
    }
    let off = |m: ArrayView2<f64>, i: usize, j: usize| if i == j { 0.0 } else { m[[i, j]] };
    let mut trace = 0.0;
    let (mut sum_k, mut sum_l, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut row_k, mut row_l) = (0.0, 0.0);
        for j in 0..n {
            let (a, b) = (off(k, i, j), off(l, i, j));
            trace += a * b;
            row_k += a;
            row_l += b;
        }
        sum_k += row_k;
        sum_l += row_l;
        cross += row_k * row_l;
    }
    let nf = n as f64;
    let value = trace + sum_k * sum_l / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross;
    Ok(value / (nf * (nf - 3.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkaConfig {
    /// Samples per minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CkaConfig {
    fn default() -> Self {
        CkaConfig { batch_size: 8, seed: 0 }
    }
}

/// Seeded split of `0..m` into `k = ⌊m/n⌋` batches of `n`; the remaining
/// `m mod n` shuffled rows are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchAssignment {
    pub batches: Vec<Vec<usize>>,
    pub dropped: Vec<usize>,
}

impl BatchAssignment {
    pub fn new(m: usize, cfg: &CkaConfig) -> Result<Self> {
        let n = cfg.batch_size;
        if n < 4 {
            return Err(Error::config("cka.batch_size", format!("must be at least 4, got {n}")));
        }
        if m < n {
            return Err(Error::InvalidInput(format!("{m} samples is fewer than one batch of {n}")));
        }
        let perm = rng::permutation(&mut rng::stream(cfg.seed, "minibatch-cka"), m);
        let k = m / n;
        Ok(BatchAssignment { batches: perm[..k * n].chunks(n).map(<[usize]>::to_vec).collect(), dropped: perm[k * n..].to_vec() })
    }

    pub fn k(&self) -> usize {
        self.batches.len()
    }
}

/// `X_b X_bᵀ` accumulated in f64.
pub fn gram(x: ArrayView2<f32>, rows: &[usize]) -> Array2<f64> {
    let xb = x.select(Axis(0), rows).mapv(|v| v as f64);
    xb.dot(&xb.t())
}

/// Per-batch Gram matrices of one representation plus its self-HSIC mean.
struct GramSet {
    grams: Vec<Array2<f64>>,
    self_hsic: f64,
}

impl GramSet {
    fn new(x: ArrayView2<f32>, batches: &BatchAssignment, what: &str) -> Result<Self> {
        let grams: Vec<Array2<f64>> = batches.batches.iter().map(|b| gram(x, b)).collect();
        let mut total = 0.0;
        for g in &grams {
            total += unbiased_hsic(g.view(), g.view())?;
        }
        let self_hsic = total / grams.len() as f64;
        if !(self_hsic > 0.0) {
            return Err(Error::DegenerateCka(format!(
                "mean self-HSIC of {what} is {self_hsic:e} over {} batches; activations are (near) constant",
                grams.len()
            )));
        }
        Ok(GramSet { grams, self_hsic })
    }

    fn cka(&self, other: &GramSet) -> Result<f64> {
        let mut cross = 0.0;
        for (k, l) in self.grams.iter().zip(&other.grams) {
            cross += unbiased_hsic(k.view(), l.view())?;
        }
        Ok(cross / self.grams.len() as f64 / (self.self_hsic.sqrt() * other.self_hsic.sqrt()))
    }
}

fn check_rows(x: ArrayView2<f32>, y: ArrayView2<f32>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("representations have {} and {} rows", x.nrows(), y.nrows())));
    }
    Ok(())
}

/// Minibatch CKA under a given batch assignment.
pub fn minibatch_cka_with(x: ArrayView2<f32>, y: ArrayView2<f32>, batches: &BatchAssignment) -> Result<f64> {
    check_rows(x, y)?;
    if batches.batches.iter().flatten().any(|&r| r >= x.nrows()) {
        return Err(Error::InvalidInput("batch assignment indexes past the representation rows".into()));
    }
    GramSet::new(x, batches, "X")?.cka(&GramSet::new(y, batches, "Y")?)
}

/// `mean_b H(K_b, L_b) / (√mean_b H(K_b, K_b) · √mean_b H(L_b, L_b))` over
/// seeded batches of rows, `K_b = X_b X_bᵀ`, `L_b = Y_b Y_bᵀ`.
pub fn minibatch_cka(x: ArrayView2<f32>, y: ArrayView2<f32>, cfg: &CkaConfig) -> Result<f64> {
    check_rows(x, y)?;
    minibatch_cka_with(x, y, &BatchAssignment::new(x.nrows(), cfg)?)
}

/// CKA between every layer of one model (rows) and every layer of another (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CKAMatrix {
    pub values: Vec<Vec<f64>>,
    pub layers_a: Vec<usize>,
    pub layers_b: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub k: usize,
}

impl CKAMatrix {
    pub fn get(&self, layer_a: usize, layer_b: usize) -> Option<f64> {
        let p = self.layers_a.iter().position(|&l| l == layer_a)?;
        let q = self.layers_b.iter().position(|&l| l == layer_b)?;
        Some(self.values[p][q])
    }

    /// Grid with a header row of `layers_b` ids and a leading `layers_a` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).at(path)?;
        self.write_to(file).at(path)
    }

    pub fn write_to<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["layer".to_string()];
        header.extend(self.layers_b.iter().map(|l| l.to_string()));
        w.write_record(&header)?;
        for (la, row) in self.layers_a.iter().zip(&self.values) {
            let mut rec = vec![la.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn read_csv(path: &Path, cfg: &CkaConfig, k: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Results(format!("{}: bad layer id {s}: {e}", path.display())));
        let layers_b = r.headers()?.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let (mut layers_a, mut values) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            layers_a.push(parse(&rec[0])?);
            values.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Results(format!("{}: bad value {v}: {e}", path.display()))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(CKAMatrix { values, layers_a, layers_b, batch_size: cfg.batch_size, seed: cfg.seed, k })
    }
}

/// CKA grid from pre-extracted activations; rows must cover the same sample ids.
pub fn cka_matrix_from_activations(acts_a: &[ActivationMatrix], acts_b: &[ActivationMatrix], cfg: &CkaConfig) -> Result<CKAMatrix> {
    let ids = &acts_a.first().ok_or_else(|| Error::InvalidInput("no layers for model A".into()))?.sample_ids;
    for m in acts_a.iter().chain(acts_b) {
        if &m.sample_ids != ids {
            return Err(Error::InvalidInput(format!("layer {} activations are not aligned by sample id", m.layer_id)));
        }
    }
    let batches = BatchAssignment::new(ids.len(), cfg)?;
    let grams = |acts: &[ActivationMatrix], model: &str| -> Result<Vec<GramSet>> {
        acts.iter().map(|m| GramSet::new(m.values.view(), &batches, &format!("model {model} layer {}", m.layer_id))).collect()
    };
    let (ga, gb) = (grams(acts_a, "A")?, grams(acts_b, "B")?);
    let values = ga.iter().map(|a| gb.iter().map(|b| a.cka(b)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = values.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::DegenerateCka(format!("non-finite CKA entry {bad}")));
    }
    Ok(CKAMatrix {
        values,
        layers_a: acts_a.iter().map(|m| m.layer_id).collect(),
        layers_b: acts_b.iter().map(|m| m.layer_id).collect(),
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        k: batches.k(),
    })
}

/// CKA between layers of `model_a` on `view_a` and `model_b` on `view_b`.
/// The views' sample `i` must be the same item (e.g. both sides of pair `i`).
pub fn cka_matrix(
    model_a: &TrainedModel,
    model_b: &TrainedModel,
    view_a: &SingleView,
    view_b: &SingleView,
    layers_a: &[usize],
    layers_b: &[usize],
    cfg: &CkaConfig,
) -> Result<CKAMatrix> {
    if view_a.len() != view_b.len() || view_a.labels != view_b.labels {
        return Err(Error::InvalidInput(format!(
            "views are not sample-aligned ({} vs {} samples or differing labels)",
            view_a.len(),
            view_b.len()
        )));
    }
    let acts_a = extract_activations(model_a, view_a, layers_a)?;
    let acts_b = extract_activations(model_b, view_b, layers_b)?;
    cka_matrix_from_activations(&acts_a, &acts_b, cfg)
}

/// All conv layers plus the representation: `1..=layer_count + 1`.
pub fn all_layers(model: &TrainedModel) -> Vec<usize> {
    (1..=model.encoder.layer_count() + 1).collect()
}
