use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("gradient norm {observed} exceeds the declared bound {bound}")]
    GradientBoundViolated { observed: f64, bound: f64 },

    #[error("rate {observed} fell below its floor {floor}")]
    RateBelowFloor { observed: f64, floor: f64 },

    #[error("batch size {m} is not in [1, {n}]")]
    InvalidBatchSize { m: usize, n: usize },

    #[error("sample index {index} out of range for a dataset of {n} samples")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("quadrature did not reach tolerance {tol}")]
    QuadratureFailed { tol: f64 },

    #[error("grid normalization did not converge: relative change {change} after {resolution} cells per dimension")]
    NonConvergentGrid { change: f64, resolution: usize },

    #[error("density value {value} exceeds the rejection envelope {envelope}")]
    EnvelopeViolation { value: f64, envelope: f64 },

    #[error("bin layout mismatch: {0}")]
    BinMismatch(String),

    #[error("empty sample")]
    EmptySample,

    #[error("manifest at {path} was written by a different configuration (hash {existing}, expected {expected})")]
    ManifestMismatch {
        path: PathBuf,
        existing: String,
        expected: String,
    },

    #[error("malformed run directory: {0}")]
    MalformedRun(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
