//! Cross-view transfer: an encoder trained on one view is frozen and a
//! logistic probe on its representations is fit on the other view.
//!
//! cargo run --release --example linear_probe -- [epochs]

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{normalize_and_resize, stratified_holdout, synthetic_pipeline_views, TransformSpec, View};
use pipeinv::evaluation::{linear_probe_transfer, ProbeConfig};
use pipeinv::training::{train_upsl, EncoderChoice, EncoderPreset, Paradigm, TrainConfig};

fn main() -> pipeinv::Result<()> {
    let epochs = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let digits = normalize_and_resize(&bundled_digits(), 16)?;
    let transforms = [TransformSpec::Identity, TransformSpec::AffineWarp { max_shift: 2.0, max_rotation: 0.4 }];
    let views = synthetic_pipeline_views(&digits, &transforms, 0)?;
    let (_, holdout) = stratified_holdout(digits.labels(), 40, 0)?;
    let corpus = views.corpus(0, 1, &holdout, 5, 0)?;
    let (train, _) = corpus.fold(0)?;

    let mut cfg = TrainConfig::natural_image(Paradigm::Upsl).with_epochs(epochs);
    cfg.encoder = EncoderChoice::Preset(EncoderPreset::Compact);
    cfg.batch_size = 32;
    let (model, _) = train_upsl(&train.distinct_view(View::A), None, View::A, &cfg)?;
    for (label, view) in [("same view (a -> a)", View::A), ("other view (a -> b)", View::B)] {
        let r = linear_probe_transfer(&model, &train.distinct_view(view), &corpus.test.distinct_view(view), &ProbeConfig::default())?;
        println!(
            "{label}: test {:.4}, train {:.4}, {} L-BFGS iterations, converged {}, encoder unchanged {}",
            r.accuracy,
            r.train_accuracy,
            r.iterations,
            r.converged,
            r.hash_before == r.hash_after
        );
    }
    Ok(())
}
