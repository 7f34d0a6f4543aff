pub mod datasets;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod training;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
