//! Joint supervised + contrastive training of two view encoders, with the
//! per-epoch split of the loss into its supervised and contrastive terms.
//!
//! cargo run --release --example train_pxl -- [epochs] [lambda]

use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{make_two_view_mnist, stratified_holdout, TwoViewMnistOptions, View};
use pipeinv::evaluation::{accuracy, mutual_agreement, predict};
use pipeinv::objectives::ObjectiveConfig;
use pipeinv::training::{train_pxl, Paradigm, TrainConfig};

fn main() -> pipeinv::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(2, |s| s.parse().expect("epochs"));
    let lambda = args.next().map_or(0.75, |s| s.parse().expect("lambda"));
    let digits = bundled_digits();
    let (pool, holdout) = stratified_holdout(digits.labels(), 100, 0)?;
    let corpus = make_two_view_mnist(&digits.select(&pool), &digits.select(&holdout), &TwoViewMnistOptions::default(), 0)?;
    let (train, val) = corpus.fold(0)?;
    let mut cfg = TrainConfig::natural_image(Paradigm::Pxl).with_epochs(epochs);
    cfg.objective = Some(ObjectiveConfig { lambda, ..ObjectiveConfig::default() });
    let (pair, record) = train_pxl(&train, Some(&val), &cfg)?;
    for e in &record.epochs {
        println!(
            "epoch {:>3} loss {:.4} (sup {:.4}, con {:.4}) train {:.3}/{:.3} val {:.3}/{:.3}",
            e.epoch,
            e.train_loss,
            e.train_supervised.unwrap_or(f64::NAN),
            e.train_contrastive.unwrap_or(f64::NAN),
            e.train_acc,
            e.train_acc_b.unwrap_or(f64::NAN),
            e.val_acc.unwrap_or(f64::NAN),
            e.val_acc_b.unwrap_or(f64::NAN),
        );
    }
    let pa = predict(&pair.a, &corpus.test.single_view(View::A), "a")?;
    let pb = predict(&pair.b, &corpus.test.single_view(View::B), "b")?;
    println!("lambda {lambda}: hold-out {:.4}/{:.4}, agreement {:.4}", accuracy(&pa)?, accuracy(&pb)?, mutual_agreement(&pa, &pb)?);
    Ok(())
}
