use std::path::PathBuf;

use crate::fem::Space;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("potential sample {value} at x = {x} violates bounds [{v_min}, {v_max}] (v_min must be positive)")]
    PotentialBounds {
        x: f64,
        value: f64,
        v_min: f64,
        v_max: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("space mismatch: expected {expected:?}, found {found:?}")]
    SpaceMismatch { expected: Space, found: Space },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("localized basis problem for node {node} with {layers} oversampling layers is singular: {reason}")]
    PatchSingular {
        node: usize,
        layers: usize,
        reason: String,
    },

    #[error("FFT size {0} is not supported (need an even size whose prime factors are 2, 3, 5 or 7)")]
    FftSize(usize),

    #[error("reference solution has zero norm")]
    ZeroReference,

    #[error("invalid convergence data: {0}")]
    InvalidConvergenceData(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{method} at n_coarse = {n_coarse}: {source}")]
    Method {
        method: String,
        n_coarse: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for errors caused by the experiment description rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidParameter(_) => true,
            Error::Json { .. } => true,
            Error::Method { source, .. } => source.is_config_error(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
