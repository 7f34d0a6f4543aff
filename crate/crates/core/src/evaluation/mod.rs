//! Accuracy, mutual agreement, frozen-encoder probes and minibatch CKA.

mod cka;
mod metrics;
mod probe;

pub use cka::{
    all_layers, cka_matrix, cka_matrix_from_activations, flatten_activations, gram, minibatch_cka, minibatch_cka_with, unbiased_hsic,
    unflatten_activations, BatchAssignment, CKAMatrix, CkaConfig,
};
pub use metrics::{accuracy, mutual_agreement, predict, PredictionSet};
pub use probe::{linear_probe_transfer, LogisticProbe, ProbeConfig, ProbeReport};
