//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, attacks, probes, smoothing and the
/// training harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A model description is internally inconsistent (zero widths, bad dims).
    #[error("invalid model spec: {0}")]
    InvalidModelSpec(String),

    /// A vector or matrix argument has the wrong dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A computation produced a non-finite value.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// Rejection sampling of a region predicate never succeeded.
    #[error("region predicate rejected all {attempts} sampled points")]
    EmptyRegion { attempts: usize },

    /// Brute-force search is only feasible in very low dimension.
    #[error("unsupported dimension {dim} (this operation is limited to {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    /// A linear system required by an implicit-function computation is
    /// singular or inconsistent.
    #[error("singular system in {context} (|det| or residual check failed: {detail})")]
    SingularSystem {
        context: &'static str,
        detail: String,
    },

    /// The boundary normal (x' - x)/r is undefined because x' == x.
    #[error("boundary normal undefined: attack point coincides with the clean input")]
    UndefinedNormal,

    /// The smoothing integrand underflowed everywhere.
    #[error("quadrature degenerate: all integrand samples underflowed to zero")]
    QuadratureDegenerate,

    /// An operation was asked for a model/attack combination it does not support.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// Training aborted because the loss became non-finite.
    #[error("training aborted at epoch {epoch}, batch {batch}: non-finite loss")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        /// Last parameter vector before the abort, for post-mortem inspection.
        last_theta: Vec<f64>,
    },

    /// Reading or writing an artifact failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization of a config or artifact failed.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Helper for attaching a path to an I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
