//! A config-driven cross-validated experiment end to end: dataset cache,
//! every paradigm over folds, per-fold metrics and the aggregate report.
//! A second call on the same directory is a no-op.
//!
//! cargo run --release --example experiment -- [config.toml] [out dir]

use std::path::PathBuf;

use pipeinv::experiment::{default_cache_root, emit_report, run_experiment, ExperimentConfig, RunOptions};

fn main() -> pipeinv::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml")), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("pipeinv-example-experiment"), PathBuf::from);
    let cfg = ExperimentConfig::load(&config)?;
    let opts = RunOptions { out: out.clone(), cache_root: default_cache_root(), resume: true };
    let outcome = run_experiment(&cfg, &opts)?;
    if outcome.already_complete {
        println!("{} already complete", out.display());
    }
    for ((variant, seed), table) in &outcome.tables {
        for fold in &table.folds {
            println!("{variant} seed {seed} fold {}: {:?}", fold.fold, fold.metrics.get("agreement"));
        }
    }
    let report = emit_report(&out)?;
    for v in &report.collected.variants {
        if let (Some(a), Some(b)) = (report.collected.summary(&v.name, "acc_a"), report.collected.summary(&v.name, "acc_b")) {
            println!("{:<8} acc_a {:.3} acc_b {:.3} over {} fold runs", v.name, a.mean, b.mean, a.n);
        }
    }
    println!("report files: {}", report.files.len());
    Ok(())
}
