//! Builds the two-view digit corpus and a pair of synthetic pipeline views,
//! caches one of them and prints split sizes and class balance.
//!
//! cargo run --release --example build_datasets

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{make_two_view_mnist, normalize_and_resize, pixel_variance, stratified_holdout, synthetic_pipeline_views, TransformSpec, TwoViewMnistOptions};
use pipeinv::experiment::{build_or_load, DatasetConfig, DigitSource};

fn main() -> pipeinv::Result<()> {
    let digits = bundled_digits();
    println!("bundled digits: {} images of {:?}, per class {:?}", digits.len(), digits.image_shape(), digits.class_histogram());

    let (pool, holdout) = stratified_holdout(digits.labels(), 100, 0)?;
    let corpus = make_two_view_mnist(&digits.select(&pool), &digits.select(&holdout), &TwoViewMnistOptions::default(), 0)?;
    println!("two-view corpus: pool {} pairs, hold-out {} pairs, fold sizes {:?}", corpus.pool.len(), corpus.test.len(), corpus.folds.fold_sizes());
    let (train, val) = corpus.fold(0)?;
    println!("fold 0: train {} / val {} pairs", train.len(), val.len());

    let small = normalize_and_resize(&digits.select(&(0..500).collect::<Vec<_>>()), 16)?;
    let transforms = [
        TransformSpec::Identity,
        TransformSpec::GaussianSmooth { sigma: 1.5 },
        TransformSpec::AffineWarp { max_shift: 2.0, max_rotation: 0.2 },
        TransformSpec::IntensityBias { strength: 0.3, grid: 4 },
    ];
    let views = synthetic_pipeline_views(&small, &transforms, 0)?;
    for (t, v) in views.transforms.iter().zip(&views.views) {
        println!("pipeline {:<60} pixel variance {:.4}", serde_json::to_string(t)?, pixel_variance(v));
    }

    let root = std::env::temp_dir().join("pipeinv-example-cache");
    let cfg = DatasetConfig::TwoViewMnist { source: DigitSource::default(), fold_count: 5, subsample: 0.2, max_rotation: std::f32::consts::FRAC_PI_4, seed: 0 };
    let first = build_or_load(&cfg, &root)?;
    let second = build_or_load(&cfg, &root)?;
    println!("cache {}: built {}, reloaded {}, fingerprint {}", first.dir.display(), first.built, !second.built, second.manifest.fingerprint());
    Ok(())
}
