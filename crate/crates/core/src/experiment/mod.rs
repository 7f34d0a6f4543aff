//! Config-driven experiments: dataset caching, fold runs over every
//! paradigm and seed, and report emission.

mod config;
mod data;
mod report;
mod run;

pub use config::{
    CkaSection, DatasetConfig, DigitSource, EvaluationConfig, ExperimentConfig, Overrides, ProbeSection, SweepConfig, TrainingSection, Variant,
};
pub use data::{build_corpus, build_or_load, cache_dir, default_cache_root, CachedCorpus, CACHE_ENV, DATA_ENV};
pub use report::{collect, emit_report, Collected, MetricRecord, Report, REPORT_DIR};
pub use run::{
    evaluate_models, run_experiment, run_hash, seed_dir, variant_dir, ExperimentManifest, ResultsDir, RunOptions, RunOutcome, RunStatus, MANIFEST_NAME, VARIANT_FILE,
};
