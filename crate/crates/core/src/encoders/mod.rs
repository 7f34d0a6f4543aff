//! Declarative convolutional encoders with classification and projection
//! heads, checkpointing, and per-layer activation capture.
//!
//! An [`EncoderSpec`] lists conv layers with their declared output dims;
//! [`EncoderSpec::propagate`] checks them. Specs with two spatial dims run on
//! the built-in layer library; higher-rank specs are shape-checked only.

mod heads;
mod model;
mod network;
mod spec;

pub use heads::{ProjectionHead, ProjectionHeadSpec, ProjectionKind, ProjectionTape};
pub use model::{
    build_encoder, extract_activations, ActivationMatrix, ForwardOutput, ModelMetadata, Paradigm, TrainedModel, TrainedModelPair,
    EVAL_BATCH,
};
pub use network::{Encoder, EncoderTape, INIT_STD};
pub use spec::{ConvLayerSpec, EncoderSpec, LayerShape, MaxPoolSpec, Normalization, TerminalPool};
