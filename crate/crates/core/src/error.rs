use std::path::PathBuf;

/// Errors produced by dataset construction, model building, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value failed validation. `field` is a dotted path into the config.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    /// Encoder spec failed shape propagation at `layer`.
    #[error("encoder spec error at layer {layer}: {message}")]
    Spec { layer: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown layer id {0}")]
    UnknownLayer(usize),

    /// Non-finite loss during training. `snapshot` holds the offending step's state.
    #[error("non-finite loss at epoch {epoch}, step {step}: {snapshot}")]
    NonFiniteLoss { epoch: usize, step: usize, snapshot: String },

    /// Negative self-similarity estimate under the CKA normalizer.
    #[error("degenerate CKA normalizer: {0}")]
    DegenerateCka(String),

    #[error("corpus format error in {path}: {message}")]
    Corpus { path: PathBuf, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("probe solver error: {0}")]
    Probe(String),

    #[error("results error: {0}")]
    Results(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    ReadNpy(#[from] ndarray_npy::ReadNpyError),

    #[error(transparent)]
    WriteNpy(#[from] ndarray_npy::WriteNpyError),

    #[error(transparent)]
    Zip(#[from] zip::result::ZipError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Attaches a path to `std::io::Error`s.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
