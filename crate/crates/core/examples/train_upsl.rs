//! Single-view training on the bundled digits: one encoder per view of the
//! two-view corpus, then hold-out accuracy.
//!
//! cargo run --release --example train_upsl -- [epochs]

use std::time::Instant;

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{make_two_view_mnist, stratified_holdout, TwoViewMnistOptions, View};
use pipeinv::evaluation::{accuracy, predict};
use pipeinv::training::{train_upsl, Paradigm, TrainConfig};

fn main() -> pipeinv::Result<()> {
    let epochs = std::env::args().nth(1).map_or(2, |s| s.parse().expect("epochs"));
    let digits = bundled_digits();
    let (pool, holdout) = stratified_holdout(digits.labels(), 100, 0)?;
    let corpus = make_two_view_mnist(&digits.select(&pool), &digits.select(&holdout), &TwoViewMnistOptions::default(), 0)?;
    let (train, val) = corpus.fold(0)?;
    let cfg = TrainConfig::natural_image(Paradigm::Upsl).with_epochs(epochs);
    for view in [View::A, View::B] {
        let started = Instant::now();
        let (model, record) = train_upsl(&train.distinct_view(view), Some(&val.distinct_view(view)), view, &cfg)?;
        let test = corpus.test.single_view(view);
        let acc = accuracy(&predict(&model, &test, view.name())?)?;
        for e in &record.epochs {
            println!("view {} epoch {:>3} loss {:.4} train {:.3} val {:.3}", view.name(), e.epoch, e.train_loss, e.train_acc, e.val_acc.unwrap_or(f64::NAN));
        }
        println!("view {}: hold-out accuracy {acc:.4} ({:.1}s)", view.name(), started.elapsed().as_secs_f64());
    }
    Ok(())
}
