//! Merged-view training: one encoder on the union of both views' images,
//! evaluated on each view of the hold-out split.
//!
//! cargo run --release --example train_mpsl -- [epochs]

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{make_two_view_mnist, stratified_holdout, TwoViewMnistOptions, View};
use pipeinv::evaluation::{accuracy, predict};
use pipeinv::training::{train_mpsl, Paradigm, TrainConfig};

fn main() -> pipeinv::Result<()> {
    let epochs = std::env::args().nth(1).map_or(2, |s| s.parse().expect("epochs"));
    let digits = bundled_digits();
    let (pool, holdout) = stratified_holdout(digits.labels(), 100, 0)?;
    let corpus = make_two_view_mnist(&digits.select(&pool), &digits.select(&holdout), &TwoViewMnistOptions::default(), 0)?;
    let (train, val) = corpus.fold(0)?;
    let cfg = TrainConfig::natural_image(Paradigm::Mpsl).with_epochs(epochs);
    let (model, record) = train_mpsl(&train, Some(&val), &cfg)?;
    for e in &record.epochs {
        println!("epoch {:>3} loss {:.4} train {:.3} val {:.3}", e.epoch, e.train_loss, e.train_acc, e.val_acc.unwrap_or(f64::NAN));
    }
    for view in [View::A, View::B] {
        let acc = accuracy(&predict(&model, &corpus.test.distinct_view(view), view.name())?)?;
        println!("hold-out view {}: {acc:.4}", view.name());
    }
    println!("trained {:.1}s on {} images per epoch", record.wall_clock_secs, 2 * train.len());
    Ok(())
}
