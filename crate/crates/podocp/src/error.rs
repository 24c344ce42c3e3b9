//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its documented range or inconsistent with
    /// the rest of the inputs (wrong dimension, empty set, bad enum value).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested mesh width cannot resolve a geometric feature with at
    /// least two elements across it.
    #[error("mesh resolution too coarse: {0}")]
    MeshResolution(String),

    /// A direct factorization failed (structurally or numerically singular).
    #[error("singular system in {context}")]
    SingularSystem { context: String },

    /// Newton's method did not reach the requested tolerance.
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    /// The line search could not produce a decrease along the Newton step.
    #[error("line search stagnated at step size {step:.3e} (residual {residual:.3e})")]
    LineSearchStagnation { step: f64, residual: f64 },

    /// A quantity that must be positive (definite) is not.
    #[error("matrix is not positive definite in {context}")]
    NotPositiveDefinite { context: String },

    /// Reading or writing an artifact failed.
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A persisted artifact has an unexpected format or is corrupted.
    #[error("malformed artifact {path}: {reason}")]
    MalformedArtifact { path: String, reason: String },

    /// Configuration file could not be parsed or failed validation.
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
