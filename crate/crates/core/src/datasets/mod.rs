//! Multi-view classification datasets.
//!
//! A [`MultiViewDataset`] pairs rows of two [`LabeledImageSet`]s. Pairs are
//! either *by subject* (row `i` of both views is the same underlying sample
//! under two transformations) or *by label* (rows from two corpora that only
//! share a class). Builders here produce the two-view MNIST and MNIST–SVHN
//! benchmarks and a synthetic "pipeline" generator, each as a
//! [`MultiViewCorpus`]: a cross-validation pool with a stratified fold
//! assignment plus a held-out test split.

mod builders;
pub mod cache;
pub mod image;
pub mod loaders;
mod split;

use std::sync::Arc;

use ndarray::{s, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builders::{
    make_mnist_svhn, make_two_view_mnist, normalize_and_resize, pixel_variance, synthetic_pipeline_views, PipelineViews, TransformSpec,
    TwoViewMnistOptions, MNIST_SVHN_PAIRS_PER_INSTANCE,
};
pub use image::rescale_unit_interval;
pub use split::{stratified_holdout, stratified_kfold_split, stratified_subsample, FoldAssignment};

/// Images (`N × H × W × C`, intensities in `[0, 1]`) with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    images: Array4<f32>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledImageSet {
    pub fn new(images: Array4<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len_of(Axis(0)) != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len_of(Axis(0)),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidInput(format!("label {bad} outside [0, {class_count})")));
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { images, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Array4<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// `(H, W, C)` of every image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let (_, h, w, c) = self.images.dim();
        (h, w, c)
    }

    /// Rows `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        LabeledImageSet {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Per-class member counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        self.labels.iter().for_each(|&l| h[l] += 1);
        h
    }

    /// Batch of rows in channel-first layout `B × C × H × W` for the encoders.
    pub fn batch_nchw(&self, indices: &[usize]) -> Array4<f32> {
        let (h, w, c) = self.image_shape();
        let mut out = Array4::zeros((indices.len(), c, h, w));
        for (b, &i) in indices.iter().enumerate() {
            let img = self.images.slice(s![i, .., .., ..]);
            out.slice_mut(s![b, .., .., ..]).assign(&img.permuted_axes([2, 0, 1]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    BySubject,
    ByLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Row indices into view A and view B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
}

/// Paired samples drawn from two views.
///
/// Views are shared behind `Arc` so fold subsets do not copy image data.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub view_a: Arc<LabeledImageSet>,
    pub view_b: Arc<LabeledImageSet>,
    pairs: Vec<Pair>,
    labels: Vec<usize>,
    pub pairing_mode: PairingMode,
    pub split: SplitTag,
}

impl MultiViewDataset {
    /// Validates label consistency of every pair (and index equality in by-subject mode).
    pub fn new(
        view_a: Arc<LabeledImageSet>,
        view_b: Arc<LabeledImageSet>,
        pairs: Vec<Pair>,
        pairing_mode: PairingMode,
        split: SplitTag,
    ) -> Result<Self> {
        if view_a.class_count() != view_b.class_count() {
            return Err(Error::Pairing(format!(
                "views disagree on class count ({} vs {})",
                view_a.class_count(),
                view_b.class_count()
            )));
        }
        let mut labels = Vec::with_capacity(pairs.len());
        for (k, p) in pairs.iter().enumerate() {
            if p.a >= view_a.len() || p.b >= view_b.len() {
                return Err(Error::Pairing(format!("pair {k} indexes outside its views")));
            }
            if pairing_mode == PairingMode::BySubject && p.a != p.b {
                return Err(Error::Pairing(format!("pair {k} is by-subject but ({}, {})", p.a, p.b)));
            }
            let (la, lb) = (view_a.labels()[p.a], view_b.labels()[p.b]);
            if la != lb {
                return Err(Error::Pairing(format!("pair {k} has labels {la} and {lb}")));
            }
            labels.push(la);
        }
        Ok(Self { view_a, view_b, pairs, labels, pairing_mode, split })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Label of each pair.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.view_a.class_count()
    }

    /// Pairs at `indices`, retagged as `split`.
    pub fn subset(&self, indices: &[usize], split: SplitTag) -> MultiViewDataset {
        MultiViewDataset {
            view_a: Arc::clone(&self.view_a),
            view_b: Arc::clone(&self.view_b),
            pairs: indices.iter().map(|&i| self.pairs[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            pairing_mode: self.pairing_mode,
            split,
        }
    }

    /// The same pairs with views A and B exchanged.
    pub fn swapped(&self) -> MultiViewDataset {
        MultiViewDataset {
            view_a: Arc::clone(&self.view_b),
            view_b: Arc::clone(&self.view_a),
            pairs: self.pairs.iter().map(|p| Pair { a: p.b, b: p.a }).collect(),
            labels: self.labels.clone(),
            pairing_mode: self.pairing_mode,
            split: self.split,
        }
    }

    /// One side of the pairing as a plain single-view set (rows follow pair order).
    pub fn single_view(&self, view: View) -> SingleView {
        let (set, rows) = match view {
            View::A => (&self.view_a, self.pairs.iter().map(|p| p.a).collect()),
            View::B => (&self.view_b, self.pairs.iter().map(|p| p.b).collect()),
        };
        SingleView { images: Arc::clone(set), rows, labels: self.labels.clone() }
    }

    /// Distinct rows of one view referenced by any pair, ascending. Equals
    /// [`single_view`](Self::single_view) up to order when pairing is one-to-one.
    pub fn distinct_view(&self, view: View) -> SingleView {
        let (set, mut rows): (_, Vec<usize>) = match view {
            View::A => (&self.view_a, self.pairs.iter().map(|p| p.a).collect()),
            View::B => (&self.view_b, self.pairs.iter().map(|p| p.b).collect()),
        };
        rows.sort_unstable();
        rows.dedup();
        let labels = rows.iter().map(|&r| set.labels()[r]).collect();
        SingleView { images: Arc::clone(set), rows, labels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    A,
    B,
}

impl View {
    pub fn other(self) -> View {
        match self {
            View::A => View::B,
            View::B => View::A,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::A => "a",
            View::B => "b",
        }
    }
}

/// A row selection of one image set: what single-view training and evaluation consume.
#[derive(Debug, Clone)]
pub struct SingleView {
    pub images: Arc<LabeledImageSet>,
    /// Rows into `images`; sample id `k` of this view is `rows[k]`.
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
}

impl SingleView {
    pub fn from_set(set: Arc<LabeledImageSet>) -> Self {
        let rows = (0..set.len()).collect();
        let labels = set.labels().to_vec();
        SingleView { images: set, rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.images.class_count()
    }

    /// Encoder batch for sample ids `ids`.
    pub fn batch(&self, ids: &[usize]) -> Array4<f32> {
        let rows: Vec<usize> = ids.iter().map(|&i| self.rows[i]).collect();
        self.images.batch_nchw(&rows)
    }

    /// First `n` sample ids (canonical ascending order).
    pub fn head(&self, n: usize) -> SingleView {
        let n = n.min(self.len());
        SingleView {
            images: Arc::clone(&self.images),
            rows: self.rows[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Concatenation of two single views sharing a label space.
    pub fn union(&self, other: &SingleView) -> Result<UnionView> {
        if self.class_count() != other.class_count() {
            return Err(Error::InvalidInput("views have different class counts".into()));
        }
        Ok(UnionView { parts: [self.clone(), other.clone()] })
    }
}

/// Two single views whose samples are drawn from jointly (merged-view training).
#[derive(Debug, Clone)]
pub struct UnionView {
    pub parts: [SingleView; 2],
}

impl UnionView {
    pub fn len(&self) -> usize {
        self.parts[0].len() + self.parts[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolve a union sample id into `(part, id within part)`.
    pub fn locate(&self, id: usize) -> (usize, usize) {
        let n0 = self.parts[0].len();
        if id < n0 {
            (0, id)
        } else {
            (1, id - n0)
        }
    }

    pub fn label(&self, id: usize) -> usize {
        let (p, k) = self.locate(id);
        self.parts[p].labels[k]
    }
}

/// A cross-validation pool, its fold assignment, and a held-out test split.
#[derive(Debug, Clone)]
pub struct MultiViewCorpus {
    pub name: String,
    pub pool: MultiViewDataset,
    pub test: MultiViewDataset,
    pub folds: FoldAssignment,
    pub seed: u64,
    /// Free-form construction metadata (transform parameters, sizes).
    pub metadata: serde_json::Value,
    /// Per-sample transform draws worth persisting (e.g. rotation angles), by name.
    pub sample_metadata: Vec<(String, Vec<f32>)>,
}

impl MultiViewCorpus {
    /// `(train, val)` for fold `fold`: val is the fold's members, train the rest.
    pub fn fold(&self, fold: usize) -> Result<(MultiViewDataset, MultiViewDataset)> {
        if fold >= self.folds.k {
            return Err(Error::InvalidInput(format!(
                "fold {fold} outside the {}-fold assignment",
                self.folds.k
            )));
        }
        if self.folds.fold_of_sample.len() != self.pool.len() {
            return Err(Error::InvalidInput(format!(
                "fold assignment covers {} samples, pool has {}",
                self.folds.fold_of_sample.len(),
                self.pool.len()
            )));
        }
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..self.pool.len()).partition(|&i| self.folds.fold_of_sample[i] == fold);
        Ok((self.pool.subset(&train, SplitTag::Train), self.pool.subset(&val, SplitTag::Val)))
    }
}
