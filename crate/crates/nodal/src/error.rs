//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by geometry construction, field models and the numerical
/// pipelines built on top of them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An extracted nodal element has a gradient below the regularity floor,
    /// i.e. the field is numerically outside the set of functions with 0 as a
    /// regular value.
    #[error("regularity violation: {0}")]
    RegularityViolation(String),

    /// An integrand evaluated to a non-finite value on a nodal element.
    #[error("integrand failure: {0}")]
    IntegrandFailure(String),

    /// The observed block of a Gaussian conditioning problem is numerically
    /// singular (the point pair lies on or near the degenerate set).
    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),

    /// The extended (value, derivative, second derivative) non-degeneracy
    /// sweep required for the three-dimensional derivative-norm quadrature
    /// failed at some probe.
    #[error("non-degeneracy sweep failure: {0}")]
    NonDegeneracySweepFailure(String),

    /// A critical zero has a Hessian eigenvalue below the Morse floor.
    #[error("Morse floor violation: {0}")]
    MorseFloorViolation(String),

    /// Newton iteration failed to converge from a seed.
    #[error("Newton stall: {0}")]
    NewtonStall(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// The nodal set fails the minimality precondition of the second
    /// variation formula.
    #[error("nodal set not minimal: {0}")]
    NotMinimal(String),

    #[error("configuration error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Exit code class for the CLI: 2 config, 3 numerical, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidDomain(_) | Error::InvalidModel(_) => 2,
            Error::RegularityViolation(_)
            | Error::DegenerateConditioning(_)
            | Error::NonDegeneracySweepFailure(_)
            | Error::MorseFloorViolation(_)
            | Error::NotMinimal(_)
            | Error::IntegrandFailure(_)
            | Error::InsufficientSamples(_)
            | Error::NewtonStall(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
