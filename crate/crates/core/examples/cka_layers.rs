//! Layer-by-layer minibatch CKA between two encoders trained on different
//! pipeline views, freshly initialized and after training.
//!
//! cargo run --release --example cka_layers -- [epochs]

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{normalize_and_resize, stratified_holdout, synthetic_pipeline_views, TransformSpec, View};
use pipeinv::encoders::{EncoderSpec, ModelMetadata, ProjectionHeadSpec, ProjectionKind, TrainedModel};
use pipeinv::evaluation::{all_layers, cka_matrix, CKAMatrix, CkaConfig};
use pipeinv::training::{init_seed, train_upsl, EncoderChoice, EncoderPreset, Paradigm, TrainConfig};

fn print(title: &str, m: &CKAMatrix) {
    println!("{title} (k = {} batches of {})", m.k, m.batch_size);
    for (la, row) in m.layers_a.iter().zip(&m.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  layer {la}: {}", cells.join(" "));
    }
}

fn main() -> pipeinv::Result<()> {
    let epochs = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let digits = normalize_and_resize(&bundled_digits(), 16)?;
    let views = synthetic_pipeline_views(&digits, &[TransformSpec::Identity, TransformSpec::GaussianSmooth { sigma: 1.5 }], 0)?;
    let (_, holdout) = stratified_holdout(digits.labels(), 40, 0)?;
    let corpus = views.corpus(0, 1, &holdout, 5, 0)?;
    let (train, val) = corpus.fold(0)?;

    let mut cfg = TrainConfig::natural_image(Paradigm::Upsl).with_epochs(epochs);
    cfg.encoder = EncoderChoice::Preset(EncoderPreset::Compact);
    cfg.batch_size = 32;
    let cka = CkaConfig::default();
    let (ta, tb) = (corpus.test.single_view(View::A), corpus.test.single_view(View::B));

    let fresh = |view: &str, seed: u64| {
        let spec = EncoderSpec::compact(1, 16);
        let head = ProjectionHeadSpec { kind: ProjectionKind::Identity, width: spec.representation_dim };
        let meta = ModelMetadata { paradigm: Paradigm::Upsl, seed, fold: 0, config_hash: String::new(), view: view.into(), class_count: 10, lambda: None };
        TrainedModel::new(&spec, head, meta, init_seed(seed, view))
    };
    let (a0, b0) = (fresh("a", 0)?, fresh("b", 0)?);
    print("freshly initialized encoders", &cka_matrix(&a0, &b0, &ta, &tb, &all_layers(&a0), &all_layers(&b0), &cka)?);

    let (a, _) = train_upsl(&train.distinct_view(View::A), Some(&val.distinct_view(View::A)), View::A, &cfg)?;
    let (b, _) = train_upsl(&train.distinct_view(View::B), Some(&val.distinct_view(View::B)), View::B, &cfg)?;
    print("trained encoders", &cka_matrix(&a, &b, &ta, &tb, &all_layers(&a), &all_layers(&b), &cka)?);
    Ok(())
}
