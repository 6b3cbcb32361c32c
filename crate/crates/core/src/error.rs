use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver hit its iteration cap.
    #[error("solver did not converge after {iterations} iterations (last estimate {last})")]
    Convergence { iterations: usize, last: f64 },

    /// The calibrated throughput exponent would fall outside the configured bounds.
    #[error(
        "throughput exponent outside [{lo}, {hi}]: implied average throughput \
         {implied_tflops_per_gpu:.6e} TFLOP/s per GPU is unachievably {direction}"
    )]
    AlphaRange {
        lo: f64,
        hi: f64,
        implied_tflops_per_gpu: f64,
        direction: &'static str,
    },

    #[error("unknown device {0:?}: no known device family matches")]
    UnknownDevice(String),

    #[error("unknown region {0:?}: supply the grid intensity directly with --intensity")]
    UnknownRegion(String),

    #[error("duplicate key {0:?}")]
    DuplicateKey(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    /// The regression design has fewer samples than terms.
    #[error("rank error: {samples} samples cannot determine {terms} coefficients")]
    Rank { samples: usize, terms: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
