use std::path::{Path, PathBuf};

use crate::datasets::cache::{load_corpus, read_manifest, save_corpus, DatasetManifest, MANIFEST_FILE};
use crate::datasets::loaders::{bundled_digits, load_mnist_dir, load_svhn_dir};
use crate::datasets::{
    make_mnist_svhn, make_two_view_mnist, normalize_and_resize, stratified_holdout, stratified_subsample, synthetic_pipeline_views, LabeledImageSet,
    MultiViewCorpus, TwoViewMnistOptions,
};
use crate::error::{Error, Result};

use super::config::{DatasetConfig, DigitSource};

/// Root of real corpora (`mnist/`, `svhn/` below it).
pub const DATA_ENV: &str = "PIPEINV_DATA";
/// Root of the built-dataset cache.
pub const CACHE_ENV: &str = "PIPEINV_CACHE";

/// `$PIPEINV_CACHE`, else `.pipeinv-cache` in the working directory.
pub fn default_cache_root() -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".pipeinv-cache"))
}

fn data_dir(explicit: &Option<PathBuf>, sub: &str, field: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    match std::env::var_os(DATA_ENV) {
        Some(root) => Ok(PathBuf::from(root).join(sub)),
        None => Err(Error::config(field, format!("no directory given and {DATA_ENV} is unset"))),
    }
}

fn subsample(set: LabeledImageSet, fraction: f64, seed: u64) -> Result<LabeledImageSet> {
    if fraction >= 1.0 {
        return Ok(set);
    }
    Ok(set.select(&stratified_subsample(set.labels(), fraction, seed)?))
}

/// Builds the corpus a dataset recipe describes, without caching.
pub fn build_corpus(cfg: &DatasetConfig) -> Result<MultiViewCorpus> {
    cfg.validate()?;
    match cfg {
        DatasetConfig::TwoViewMnist { source, fold_count, subsample: frac, max_rotation, seed } => {
            let (train, test) = match source {
                DigitSource::Bundled { holdout_per_class } => {
                    let digits = bundled_digits();
                    let (pool, holdout) = stratified_holdout(digits.labels(), *holdout_per_class, *seed)?;
                    (digits.select(&pool), digits.select(&holdout))
                }
                DigitSource::Directory { path } => load_mnist_dir(&data_dir(path, "mnist", "dataset.source.path")?)?,
            };
            let train = subsample(train, *frac, *seed)?;
            let opts = TwoViewMnistOptions { folds: *fold_count, image_size: 32, max_rotation: *max_rotation };
            make_two_view_mnist(&train, &test, &opts, *seed)
        }
        DatasetConfig::MnistSvhn { mnist_dir, svhn_dir, pairs_per_instance, fold_count, subsample: frac, seed } => {
            let (m_train, m_test) = load_mnist_dir(&data_dir(mnist_dir, "mnist", "dataset.mnist_dir")?)?;
            let (s_train, s_test) = load_svhn_dir(&data_dir(svhn_dir, "svhn", "dataset.svhn_dir")?)?;
            let m_train = subsample(m_train, *frac, *seed)?;
            let s_train = subsample(s_train, *frac, *seed)?;
            make_mnist_svhn((&m_train, &m_test), (&s_train, &s_test), *pairs_per_instance, *fold_count, *seed)
        }
        DatasetConfig::Synthetic { transforms, views, image_size, holdout_per_class, fold_count, subsample: frac, seed } => {
            let digits = normalize_and_resize(&bundled_digits(), *image_size)?;
            let digits = subsample(digits, *frac, *seed)?;
            let pipelines = synthetic_pipeline_views(&digits, transforms, *seed)?;
            let (_, holdout) = stratified_holdout(digits.labels(), *holdout_per_class, *seed)?;
            pipelines.corpus(views[0], views[1], &holdout, *fold_count, *seed)
        }
    }
}

/// A built corpus and where it is cached.
#[derive(Debug, Clone)]
pub struct CachedCorpus {
    pub corpus: MultiViewCorpus,
    pub manifest: DatasetManifest,
    pub dir: PathBuf,
    /// True when the corpus was built by this call.
    pub built: bool,
}

fn kind_name(cfg: &DatasetConfig) -> &'static str {
    match cfg {
        DatasetConfig::TwoViewMnist { .. } => "two_view_mnist",
        DatasetConfig::MnistSvhn { .. } => "mnist_svhn",
        DatasetConfig::Synthetic { .. } => "synthetic",
    }
}

/// Cache directory for a recipe: `<root>/<kind>-<first 16 hex of its hash>`.
pub fn cache_dir(cfg: &DatasetConfig, root: &Path) -> PathBuf {
    root.join(format!("{}-{}", kind_name(cfg), &cfg.hash()[..16]))
}

/// Loads the cached corpus for `cfg`, building and caching it on a miss.
pub fn build_or_load(cfg: &DatasetConfig, root: &Path) -> Result<CachedCorpus> {
    let dir = cache_dir(cfg, root);
    if dir.join(MANIFEST_FILE).exists() {
        let corpus = load_corpus(&dir)?;
        if corpus.folds.k != cfg.fold_count() {
            return Err(Error::Results(format!("cached dataset {} has {} folds, config asks for {}", dir.display(), corpus.folds.k, cfg.fold_count())));
        }
        return Ok(CachedCorpus { corpus, manifest: read_manifest(&dir)?, dir, built: false });
    }
    let corpus = build_corpus(cfg)?;
    let manifest = save_corpus(&corpus, &dir)?;
    Ok(CachedCorpus { corpus, manifest, dir, built: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::TransformSpec;

    fn synthetic() -> DatasetConfig {
        DatasetConfig::Synthetic {
            transforms: vec![TransformSpec::Identity, TransformSpec::GaussianSmooth { sigma: 1.0 }],
            views: [0, 1],
            image_size: 8,
            holdout_per_class: 2,
            fold_count: 2,
            subsample: 0.02,
            seed: 1,
        }
    }

    #[test]
    fn cache_round_trip() {
        let root = tempfile::tempdir().unwrap();
        let first = build_or_load(&synthetic(), root.path()).unwrap();
        assert!(first.built);
        assert_eq!(first.corpus.test.len(), 20);
        assert_eq!(first.corpus.pool.len(), 80);
        let second = build_or_load(&synthetic(), root.path()).unwrap();
        assert!(!second.built);
        assert_eq!(first.manifest.fingerprint(), second.manifest.fingerprint());
        assert_eq!(first.corpus.folds, second.corpus.folds);
    }

    #[test]
    fn missing_data_root_names_the_field() {
        let cfg = DatasetConfig::MnistSvhn { mnist_dir: None, svhn_dir: Some("x".into()), pairs_per_instance: 20, fold_count: 5, subsample: 1.0, seed: 0 };
        if std::env::var_os(DATA_ENV).is_none() {
            assert!(matches!(build_corpus(&cfg), Err(Error::Config { field, .. }) if field == "dataset.mnist_dir"));
        }
    }
}
