use std::f32::consts::FRAC_PI_4;
use std::sync::Arc;

use ndarray::{s, Array3, Array4};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::image::{affine_warp, gaussian_smooth, multiply_bias_field, rescale_in_place, resize_bilinear};
use super::split::{stratified_kfold_split, FoldAssignment};
use super::{LabeledImageSet, MultiViewCorpus, MultiViewDataset, Pair, PairingMode, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const MNIST_SVHN_PAIRS_PER_INSTANCE: usize = 20;

/// Noise added by [`TransformSpec::AdditiveNoise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Uniform { low: f32, high: f32 },
    Gaussian { std: f32 },
}

/// One deterministic-given-seed image transformation ("pipeline").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Identity,
    /// Separable Gaussian blur.
    GaussianSmooth { sigma: f32 },
    /// Random rotation in `[-max_rotation, max_rotation]` radians and shift in
    /// `[-max_shift, max_shift]` pixels per axis, drawn per image.
    AffineWarp { max_shift: f32, max_rotation: f32 },
    /// Multiplicative low-frequency field with factors in `[1 - strength, 1 + strength]`
    /// on a `grid × grid` lattice, bilinearly upsampled; result clamped to `[0, 1]`.
    IntensityBias {
        strength: f32,
        #[serde(default = "default_bias_grid")]
        grid: usize,
    },
    /// Per-pixel additive noise followed by a unit-interval rescale.
    AdditiveNoise { noise: NoiseKind },
}

fn default_bias_grid() -> usize {
    4
}

impl TransformSpec {
    /// Parses a descriptor from JSON, reporting unknown names as config errors.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(value.clone()).map_err(|e| Error::config("transform", e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config("transform", m.to_string()));
        match *self {
            TransformSpec::GaussianSmooth { sigma } if !(sigma > 0.0) => fail("sigma must be positive"),
            TransformSpec::AffineWarp { max_shift, max_rotation } if max_shift < 0.0 || max_rotation < 0.0 => {
                fail("affine bounds must be non-negative")
            }
            TransformSpec::IntensityBias { strength, grid } if !(0.0..1.0).contains(&strength) || grid < 2 => {
                fail("bias strength must lie in [0, 1) and grid >= 2")
            }
            TransformSpec::AdditiveNoise { noise: NoiseKind::Uniform { low, high } } if !(low < high) => {
                fail("uniform noise needs low < high")
            }
            TransformSpec::AdditiveNoise { noise: NoiseKind::Gaussian { std } } if !(std > 0.0) => {
                fail("gaussian noise needs std > 0")
            }
            _ => Ok(()),
        }
    }

    /// Applies the transform to every image. Returns the per-image rotation
    /// angle when the transform draws one.
    fn apply(&self, set: &LabeledImageSet, rng: &mut Rng) -> Result<(LabeledImageSet, Option<Vec<f32>>)> {
        self.validate()?;
        let mut images = set.images().clone();
        let mut angles = None;
        match *self {
            TransformSpec::Identity => {}
            TransformSpec::GaussianSmooth { sigma } => {
                for mut img in images.outer_iter_mut() {
                    let out = gaussian_smooth(img.view(), sigma)?;
                    img.assign(&out);
                }
            }
            TransformSpec::AffineWarp { max_shift, max_rotation } => {
                let mut drawn = Vec::with_capacity(set.len());
                for mut img in images.outer_iter_mut() {
                    let angle = symmetric(rng, max_rotation);
                    let dy = symmetric(rng, max_shift);
                    let dx = symmetric(rng, max_shift);
                    let out = affine_warp(img.view(), angle, dy, dx);
                    img.assign(&out);
                    drawn.push(angle);
                }
                angles = Some(drawn);
            }
            TransformSpec::IntensityBias { strength, grid } => {
                let factors = Uniform::new_inclusive(1.0 - strength, 1.0 + strength).expect("valid range");
                for mut img in images.outer_iter_mut() {
                    let coarse = Array3::from_shape_fn((grid, grid, 1), |_| factors.sample(rng));
                    let out = multiply_bias_field(img.view(), &coarse);
                    img.assign(&out);
                }
            }
            TransformSpec::AdditiveNoise { noise } => {
                for mut img in images.outer_iter_mut() {
                    match noise {
                        NoiseKind::Uniform { low, high } => {
                            let d = Uniform::new(low, high).expect("validated");
                            img.iter_mut().for_each(|v| *v += d.sample(rng));
                        }
                        NoiseKind::Gaussian { std } => {
                            let d = Normal::new(0.0, std).expect("validated");
                            img.iter_mut().for_each(|v| *v += d.sample(rng));
                        }
                    }
                    let mut owned = img.to_owned();
                    rescale_in_place(owned.as_slice_mut().expect("contiguous"))?;
                    img.assign(&owned);
                }
            }
        }
        Ok((LabeledImageSet::new(images, set.labels().to_vec(), set.class_count())?, angles))
    }
}

fn symmetric(rng: &mut Rng, bound: f32) -> f32 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..=bound)
    }
}

/// Unit-interval rescale of each image followed by bilinear resize to `size × size`.
/// Per-image unit-interval rescale followed by a bilinear resize to `size × size`.
pub fn normalize_and_resize(set: &LabeledImageSet, size: usize) -> Result<LabeledImageSet> {
    let (h, w, c) = set.image_shape();
    let mut out = Array4::zeros((set.len(), size, size, c));
    for (i, img) in set.images().outer_iter().enumerate() {
        let mut owned = img.to_owned();
        rescale_in_place(owned.as_slice_mut().expect("contiguous"))?;
        let resized = if (h, w) == (size, size) { owned } else { resize_bilinear(owned.view(), size, size) };
        out.slice_mut(s![i, .., .., ..]).assign(&resized);
    }
    LabeledImageSet::new(out, set.labels().to_vec(), set.class_count())
}

fn require_all_classes(set: &LabeledImageSet, what: &str) -> Result<()> {
    let hist = set.class_histogram();
    match hist.iter().position(|&n| n == 0) {
        Some(c) => Err(Error::Stratification(format!("{what} has no samples of class {c}"))),
        None => Ok(()),
    }
}

/// Knobs for [`make_two_view_mnist`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoViewMnistOptions {
    pub folds: usize,
    pub image_size: usize,
    /// Rotation bound for view A, radians.
    pub max_rotation: f32,
}

impl Default for TwoViewMnistOptions {
    fn default() -> Self {
        Self { folds: 5, image_size: 32, max_rotation: FRAC_PI_4 }
    }
}

/// Two corrupted views of the same digits.
///
/// Every image is rescaled to `[0, 1]` and resized to 32×32. View A is rotated
/// by an angle drawn uniformly from `[-π/4, π/4]` (fixed at construction and
/// recorded as `rotation_angle/{pool,test}`); view B gets per-pixel
/// `Uniform[0, 1]` noise and a second unit-interval rescale. The training
/// corpus becomes a stratified k-fold pool; `test` is the held-out split.
pub fn make_two_view_mnist(
    train: &LabeledImageSet,
    test: &LabeledImageSet,
    opts: &TwoViewMnistOptions,
    seed: u64,
) -> Result<MultiViewCorpus> {
    require_all_classes(train, "training corpus")?;
    require_all_classes(test, "test corpus")?;
    let rotate = TransformSpec::AffineWarp { max_shift: 0.0, max_rotation: opts.max_rotation };
    let noise = TransformSpec::AdditiveNoise { noise: NoiseKind::Uniform { low: 0.0, high: 1.0 } };

    let build = |set: &LabeledImageSet, split: SplitTag| -> Result<(MultiViewDataset, Vec<f32>)> {
        let base = normalize_and_resize(set, opts.image_size)?;
        let tag = format!("{split:?}").to_lowercase();
        let (rotated, angles) = rotate.apply(&base, &mut rng::stream(seed, &format!("two-view-mnist/rotate/{tag}")))?;
        let (noisy, _) = noise.apply(&base, &mut rng::stream(seed, &format!("two-view-mnist/noise/{tag}")))?;
        let pairs = (0..base.len()).map(|i| Pair { a: i, b: i }).collect();
        let ds = MultiViewDataset::new(Arc::new(rotated), Arc::new(noisy), pairs, PairingMode::BySubject, split)?;
        Ok((ds, angles.expect("rotation records angles")))
    };
    let (pool, pool_angles) = build(train, SplitTag::Train)?;
    let (test_ds, test_angles) = build(test, SplitTag::Test)?;
    let folds = stratified_kfold_split(pool.labels(), opts.folds, seed)?;
    Ok(MultiViewCorpus {
        name: "two_view_mnist".into(),
        metadata: json!({
            "view_a": rotate,
            "view_b": noise,
            "image_size": opts.image_size,
            "angle_resampling": "fixed per sample at construction",
            "pool_size": pool.len(),
            "test_size": test_ds.len(),
        }),
        sample_metadata: vec![
            ("rotation_angle_pool".into(), pool_angles),
            ("rotation_angle_test".into(), test_angles),
        ],
        pool,
        test: test_ds,
        folds,
        seed,
    })
}

/// Pairs every instance of `a` with `pairs_per_instance` same-class instances of `b`.
///
/// Partners are dealt from back-to-back random permutations of each class of
/// `b`, so `b` instances are reused as evenly as possible (usage counts differ
/// by at most one within a class).
pub fn pair_by_label(a: &LabeledImageSet, b: &LabeledImageSet, pairs_per_instance: usize, rng: &mut Rng) -> Result<Vec<Pair>> {
    if pairs_per_instance == 0 {
        return Err(Error::Pairing("pairs_per_instance must be at least 1".into()));
    }
    if a.class_count() != b.class_count() {
        return Err(Error::Pairing("corpora have different label spaces".into()));
    }
    let members = |set: &LabeledImageSet, c: usize| -> Vec<usize> {
        set.labels().iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect()
    };
    let mut pairs = Vec::with_capacity(a.len() * pairs_per_instance);
    for c in 0..a.class_count() {
        let (ma, mb) = (members(a, c), members(b, c));
        if ma.is_empty() || mb.is_empty() {
            return Err(Error::Pairing(format!(
                "class {c} is empty in {} corpus",
                if ma.is_empty() { "the first" } else { "the second" }
            )));
        }
        let needed = ma.len() * pairs_per_instance;
        let mut partners = Vec::with_capacity(needed);
        while partners.len() < needed {
            partners.extend(rng::permutation(rng, mb.len()).into_iter().map(|j| mb[j]));
        }
        let order = rng::permutation(rng, ma.len());
        let mut next = partners.into_iter();
        for _ in 0..pairs_per_instance {
            for &i in &order {
                pairs.push(Pair { a: ma[i], b: next.next().expect("enough partners") });
            }
        }
    }
    Ok(pairs)
}

/// Grayscale digits (view A, resized to 32×32) paired by label with RGB house numbers (view B).
///
/// Each view-A instance appears in exactly `pairs_per_instance` pairs. The
/// stratified folds are computed over the pair labels of the training pairing.
pub fn make_mnist_svhn(
    digits_a: (&LabeledImageSet, &LabeledImageSet),
    digits_b: (&LabeledImageSet, &LabeledImageSet),
    pairs_per_instance: usize,
    folds: usize,
    seed: u64,
) -> Result<MultiViewCorpus> {
    let build = |a: &LabeledImageSet, b: &LabeledImageSet, split: SplitTag| -> Result<MultiViewDataset> {
        let tag = format!("{split:?}").to_lowercase();
        let a32 = normalize_and_resize(a, 32)?;
        let (bh, bw, _) = b.image_shape();
        let b32 = if (bh, bw) == (32, 32) { b.clone() } else { normalize_and_resize(b, 32)? };
        let pairs = pair_by_label(&a32, &b32, pairs_per_instance, &mut rng::stream(seed, &format!("mnist-svhn/pairing/{tag}")))?;
        MultiViewDataset::new(Arc::new(a32), Arc::new(b32), pairs, PairingMode::ByLabel, split)
    };
    let pool = build(digits_a.0, digits_b.0, SplitTag::Train)?;
    let test = build(digits_a.1, digits_b.1, SplitTag::Test)?;
    let fold_assignment = stratified_kfold_split(pool.labels(), folds, seed)?;
    Ok(MultiViewCorpus {
        name: "mnist_svhn".into(),
        metadata: json!({
            "pairs_per_instance": pairs_per_instance,
            "pool_pairs": pool.len(),
            "test_pairs": test.len(),
        }),
        sample_metadata: vec![],
        pool,
        test,
        folds: fold_assignment,
        seed,
    })
}

/// One transformed copy of a corpus per transform descriptor.
#[derive(Debug, Clone)]
pub struct PipelineViews {
    pub transforms: Vec<TransformSpec>,
    pub views: Vec<Arc<LabeledImageSet>>,
}

impl PipelineViews {
    /// By-subject pairing of views `i` and `j` over all samples.
    pub fn pair(&self, i: usize, j: usize) -> Result<MultiViewDataset> {
        let (va, vb) = (
            self.views.get(i).ok_or_else(|| Error::InvalidInput(format!("no view {i}")))?,
            self.views.get(j).ok_or_else(|| Error::InvalidInput(format!("no view {j}")))?,
        );
        let pairs = (0..va.len()).map(|k| Pair { a: k, b: k }).collect();
        MultiViewDataset::new(Arc::clone(va), Arc::clone(vb), pairs, PairingMode::BySubject, SplitTag::Train)
    }

    /// Every unordered view pair `(i, j)`, `i < j`.
    pub fn all_pairs(&self) -> Result<Vec<((usize, usize), MultiViewDataset)>> {
        let n = self.views.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(((i, j), self.pair(i, j)?));
            }
        }
        Ok(out)
    }

    /// Cross-validation corpus for views `(i, j)`: the rows in `holdout` form the
    /// test split, the rest a stratified `folds`-fold pool.
    pub fn corpus(&self, i: usize, j: usize, holdout: &[usize], folds: usize, seed: u64) -> Result<MultiViewCorpus> {
        let full = self.pair(i, j)?;
        let mut is_test = vec![false; full.len()];
        for &h in holdout {
            *is_test.get_mut(h).ok_or_else(|| Error::InvalidInput(format!("holdout row {h} out of range")))? = true;
        }
        let pool_rows: Vec<usize> = (0..full.len()).filter(|&k| !is_test[k]).collect();
        let pool = full.subset(&pool_rows, SplitTag::Train);
        let test = full.subset(holdout, SplitTag::Test);
        let fold_assignment: FoldAssignment = stratified_kfold_split(pool.labels(), folds, seed)?;
        Ok(MultiViewCorpus {
            name: format!("synthetic_{i}_{j}"),
            metadata: json!({ "view_a": self.transforms[i], "view_b": self.transforms[j] }),
            sample_metadata: vec![],
            pool,
            test,
            folds: fold_assignment,
            seed,
        })
    }
}

/// Applies each descriptor to the whole corpus with its own seeded stream.
pub fn synthetic_pipeline_views(corpus: &LabeledImageSet, transforms: &[TransformSpec], seed: u64) -> Result<PipelineViews> {
    if transforms.len() < 2 {
        return Err(Error::config("transforms", format!("need at least 2 transforms, got {}", transforms.len())));
    }
    let views = transforms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut rng = rng::stream(seed, &format!("pipeline-view/{k}"));
            t.apply(corpus, &mut rng).map(|(set, _)| Arc::new(set))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineViews { transforms: transforms.to_vec(), views })
}

/// Total pixel variance of a set.
pub fn pixel_variance(set: &LabeledImageSet) -> f64 {
    let n = set.images().len() as f64;
    let mean = set.images().iter().map(|&v| v as f64).sum::<f64>() / n;
    set.images().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
}
