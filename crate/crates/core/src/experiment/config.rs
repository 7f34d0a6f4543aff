use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::TransformSpec;
use crate::encoders::Paradigm;
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{CkaConfig, ProbeConfig};
use crate::nn::OptimizerKind;
use crate::objectives::ObjectiveConfig;
use crate::training::{config_hash, EncoderChoice, TrainConfig};

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One experiment: a dataset, one or more paradigms, folds, seeds and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Training seeds; each seed is a separate set of fold runs.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Fold indices to run; empty means every fold of the dataset.
    #[serde(default)]
    pub folds: Vec<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub training: TrainingSection,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

/// Where the images come from and how the two views are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Rotated digits vs. noisy digits, paired by subject.
    TwoViewMnist {
        #[serde(default)]
        source: DigitSource,
        #[serde(default = "default_fold_count")]
        fold_count: usize,
        /// Fraction of the training corpus kept (stratified).
        #[serde(default = "one")]
        subsample: f64,
        #[serde(default = "default_rotation")]
        max_rotation: f32,
        #[serde(default)]
        seed: u64,
    },
    /// Digits paired by label with house-number crops.
    MnistSvhn {
        #[serde(default)]
        mnist_dir: Option<PathBuf>,
        #[serde(default)]
        svhn_dir: Option<PathBuf>,
        #[serde(default = "default_pairs_per_instance")]
        pairs_per_instance: usize,
        #[serde(default = "default_fold_count")]
        fold_count: usize,
        #[serde(default = "one")]
        subsample: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Two deterministic transformations of the bundled digits, paired by subject.
    Synthetic {
        transforms: Vec<TransformSpec>,
        #[serde(default = "default_view_pair")]
        views: [usize; 2],
        #[serde(default = "default_image_size")]
        image_size: usize,
        #[serde(default = "default_holdout")]
        holdout_per_class: usize,
        #[serde(default = "default_fold_count")]
        fold_count: usize,
        #[serde(default = "one")]
        subsample: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Digit corpus for [`DatasetConfig::TwoViewMnist`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum DigitSource {
    /// The compiled-in 5,000-image subset; `holdout_per_class` images per class form the test split.
    Bundled {
        #[serde(default = "default_holdout")]
        holdout_per_class: usize,
    },
    /// Standard IDX files (train + t10k); defaults to `$PIPEINV_DATA/mnist`.
    Directory {
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

impl Default for DigitSource {
    fn default() -> Self {
        DigitSource::Bundled { holdout_per_class: default_holdout() }
    }
}

fn default_fold_count() -> usize {
    5
}
fn one() -> f64 {
    1.0
}
fn default_rotation() -> f32 {
    std::f32::consts::FRAC_PI_4
}
fn default_pairs_per_instance() -> usize {
    crate::datasets::MNIST_SVHN_PAIRS_PER_INSTANCE
}
fn default_view_pair() -> [usize; 2] {
    [0, 1]
}
fn default_image_size() -> usize {
    12
}
fn default_holdout() -> usize {
    100
}

impl DatasetConfig {
    pub fn fold_count(&self) -> usize {
        match self {
            DatasetConfig::TwoViewMnist { fold_count, .. } | DatasetConfig::MnistSvhn { fold_count, .. } | DatasetConfig::Synthetic { fold_count, .. } => {
                *fold_count
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (folds, subsample) = match self {
            DatasetConfig::TwoViewMnist { fold_count, subsample, .. } | DatasetConfig::MnistSvhn { fold_count, subsample, .. } => (*fold_count, *subsample),
            DatasetConfig::Synthetic { fold_count, subsample, transforms, views, image_size, .. } => {
                if transforms.len() < 2 {
                    return Err(Error::config("dataset.transforms", "need at least 2 transforms"));
                }
                if views[0] == views[1] || views.iter().any(|&v| v >= transforms.len()) {
                    return Err(Error::config("dataset.views", format!("must be two distinct indices below {}", transforms.len())));
                }
                if *image_size < 8 {
                    return Err(Error::config("dataset.image_size", "must be at least 8"));
                }
                (*fold_count, *subsample)
            }
        };
        if folds < 2 {
            return Err(Error::config("dataset.fold_count", format!("must be at least 2, got {folds}")));
        }
        if !(subsample > 0.0 && subsample <= 1.0) {
            return Err(Error::config("dataset.subsample", format!("must be in (0, 1], got {subsample}")));
        }
        if let DatasetConfig::MnistSvhn { pairs_per_instance: 0, .. } = self {
            return Err(Error::config("dataset.pairs_per_instance", "must be positive"));
        }
        Ok(())
    }

    /// Stable identity of the dataset recipe, used as its cache key.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hyperparameters shared by every paradigm, with optional per-paradigm overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub paradigms: Vec<Paradigm>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub encoder: EncoderChoice,
    #[serde(default)]
    pub select_best_val: bool,
    #[serde(default)]
    pub upsl: Option<Overrides>,
    #[serde(default)]
    pub mpsl: Option<Overrides>,
    #[serde(default)]
    pub pxl: Option<Overrides>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
}

/// PXL runs repeated over several λ values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub cka: CkaSection,
    pub probe: ProbeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkaSection {
    pub enabled: bool,
    pub batch_size: usize,
    pub seed: u64,
    /// Leading hold-out pairs used; all when absent.
    pub max_samples: Option<usize>,
}

impl Default for CkaSection {
    fn default() -> Self {
        let d = CkaConfig::default();
        CkaSection { enabled: true, batch_size: d.batch_size, seed: d.seed, max_samples: None }
    }
}

impl CkaSection {
    pub fn config(&self) -> CkaConfig {
        CkaConfig { batch_size: self.batch_size, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub enabled: bool,
    pub solver: ProbeConfig,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { enabled: true, solver: ProbeConfig::default() }
    }
}

/// One trained configuration within an experiment: a paradigm, and for PXL a λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub paradigm: Paradigm,
    pub lambda: Option<f64>,
}

impl ExperimentConfig {
    /// Parses TOML; schema errors name the offending field path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).at(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a nonempty file-name-safe string"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.dataset.validate()?;
        if let Some(&bad) = self.folds.iter().find(|&&f| f >= self.dataset.fold_count()) {
            return Err(Error::config("folds", format!("fold {bad} outside the {}-fold split", self.dataset.fold_count())));
        }
        if self.training.paradigms.is_empty() {
            return Err(Error::config("training.paradigms", "at least one paradigm is required"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.lambda.is_empty() {
                return Err(Error::config("sweep.lambda", "at least one value is required"));
            }
            if let Some((i, l)) = sweep.lambda.iter().enumerate().find(|(_, l)| !(0.0..=1.0).contains(*l)) {
                return Err(Error::config(format!("sweep.lambda[{i}]"), format!("must be in [0, 1], got {l}")));
            }
            if !self.training.paradigms.contains(&Paradigm::Pxl) {
                return Err(Error::config("sweep", "a lambda sweep needs pxl in training.paradigms"));
            }
        }
        if self.evaluation.cka.batch_size < 4 {
            return Err(Error::config("evaluation.cka.batch_size", "must be at least 4"));
        }
        self.evaluation.probe.solver.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("evaluation.{}", field.replacen("probe.", "probe.solver.", 1)), message),
            other => other,
        })?;
        for v in self.variants() {
            self.train_config(&v, self.seeds[0], 0)?.validate()?;
        }
        Ok(())
    }

    pub fn folds(&self) -> Vec<usize> {
        if self.folds.is_empty() {
            (0..self.dataset.fold_count()).collect()
        } else {
            self.folds.clone()
        }
    }

    /// Every trained configuration, in run order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &p in &self.training.paradigms {
            match (p, &self.sweep) {
                (Paradigm::Pxl, Some(s)) => {
                    for &l in &s.lambda {
                        out.push(Variant { name: format!("pxl_lambda_{l}"), paradigm: p, lambda: Some(l) });
                    }
                }
                (Paradigm::Pxl, None) => out.push(Variant { name: "pxl".into(), paradigm: p, lambda: Some(self.objective.lambda) }),
                _ => out.push(Variant { name: p.name().into(), paradigm: p, lambda: None }),
            }
        }
        out
    }

    pub fn train_config(&self, v: &Variant, seed: u64, fold: usize) -> Result<TrainConfig> {
        let t = &self.training;
        let o = match v.paradigm {
            Paradigm::Upsl => t.upsl,
            Paradigm::Mpsl => t.mpsl,
            Paradigm::Pxl => t.pxl,
        }
        .unwrap_or_default();
        let objective = (v.paradigm == Paradigm::Pxl).then(|| ObjectiveConfig { lambda: v.lambda.unwrap_or(self.objective.lambda), ..self.objective });
        Ok(TrainConfig {
            paradigm: v.paradigm,
            epochs: o.epochs.unwrap_or(t.epochs),
            batch_size: o.batch_size.unwrap_or(t.batch_size),
            learning_rate: o.learning_rate.unwrap_or(t.learning_rate),
            optimizer: o.optimizer.unwrap_or(t.optimizer),
            seed,
            fold,
            encoder: t.encoder.clone(),
            objective,
            select_best_val: t.select_best_val,
        })
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        config_hash(&c)
    }

    /// Natural-image defaults on the bundled two-view digits.
    pub fn two_view_mnist_default(name: &str) -> Self {
        let t = TrainConfig::natural_image(Paradigm::Upsl);
        ExperimentConfig {
            name: name.into(),
            seeds: default_seeds(),
            folds: vec![],
            output_dir: None,
            dataset: DatasetConfig::TwoViewMnist {
                source: DigitSource::default(),
                fold_count: default_fold_count(),
                subsample: 1.0,
                max_rotation: default_rotation(),
                seed: 0,
            },
            training: TrainingSection {
                paradigms: vec![Paradigm::Upsl, Paradigm::Pxl],
                epochs: t.epochs,
                batch_size: t.batch_size,
                learning_rate: t.learning_rate,
                optimizer: t.optimizer,
                encoder: EncoderChoice::default(),
                select_best_val: false,
                upsl: None,
                mpsl: None,
                pxl: None,
            },
            objective: ObjectiveConfig::default(),
            sweep: None,
            evaluation: EvaluationConfig::default(),
        }
    }
}
