//! Training loops for the three paradigms and cross-validation over folds.

mod config;
mod cv;
mod loops;

pub use crate::encoders::Paradigm;
pub use crate::nn::OptimizerKind;
pub use config::{canonical_json, config_hash, EncoderChoice, EncoderPreset, TrainConfig, FULL_SET_CAP};
pub use cv::{cross_validate, fold_dir, load_fold, FoldOutcome, FoldRunner, MetricSummary, ResultTable};
pub use loops::{
    argmax, evaluate_pxl, evaluate_supervised, init_seed, predict_labels, train_mpsl, train_pxl, train_upsl, EpochLog, RunRecord, StepLog,
    SupervisedSource,
};
