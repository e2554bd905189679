use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential spec `{spec}`: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error("potential is not integrable: {0}")]
    NonIntegrable(String),

    #[error("second derivative is singular at x = {x}")]
    Singular { x: f64 },

    #[error("tabulated potential needs at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("grid needs at least {min} nodes, got {n}")]
    GridTooSmall { n: usize, min: usize },

    #[error("density does not decay at the {side} end of the domain (V' = {slope})")]
    NonNormalizable { side: &'static str, slope: f64 },

    #[error("estimated mass outside the domain {tail_mass:e} exceeds tolerance {tolerance:e}")]
    TailMassExceeded { tail_mass: f64, tolerance: f64 },

    #[error("grid functions are bound to different measures")]
    MixedMeasure,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite quotient during ascent (iterate L2 norm {norm})")]
    NumericalOverflow { norm: f64 },

    #[error("smallest eigenvalue {lambda0:e} is not zero; boundary handling is inconsistent")]
    DiscretizationInconsistency { lambda0: f64 },

    #[error("reference constant unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for bad arguments or specs, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec { .. }
            | Error::InvalidInput(_)
            | Error::GridTooSmall { .. }
            | Error::NonNormalizable { .. }
            | Error::NonIntegrable(_)
            | Error::TailMassExceeded { .. }
            | Error::InsufficientData { .. }
            | Error::ReferenceUnavailable(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn invalid_spec(spec: &str, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            spec: spec.to_string(),
            reason: reason.into(),
        }
    }
}
