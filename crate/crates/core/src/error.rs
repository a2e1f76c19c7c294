use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular metric: |det h| = {det:e} below threshold")]
    SingularMetric { det: f64 },

    #[error("graph is no longer timelike: det h = {det:e}")]
    SpacelikeDegeneration { det: f64 },

    #[error("coercivity lost at cell {cell} (t = {t}, margin = {margin:e})")]
    CoercivityLost { cell: usize, t: f64, margin: f64 },

    #[error("non-finite sample at cell {cell} (t = {t})")]
    NonFinite { cell: usize, t: f64 },

    #[error("time-derivative block H^00 is singular at cell {cell}")]
    SingularBlock { cell: usize },

    #[error("profile width {sigma} is not resolved by spacing {dx} (need sigma > 2 dx)")]
    UnresolvableProfile { sigma: f64, dx: f64 },

    #[error("data incompatible with periodic box: {0}")]
    IncompatibleWithPeriodicity(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("time series has a cadence gap at t = {t} (gap {gap}, expected {expected})")]
    IncompleteSeries { t: f64, gap: f64, expected: f64 },

    #[error("series sample {index} is not positive ({value})")]
    DegenerateSeries { index: usize, value: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: &str, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.to_string(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
