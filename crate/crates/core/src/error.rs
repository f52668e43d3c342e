use thiserror::Error;

/// Errors produced by the simulation, estimation and control layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inductance matrix is numerically singular (reciprocal condition {rcond:e})")]
    SingularInductanceMatrix { rcond: f64 },

    #[error("steady-state system is singular")]
    SingularSystem,

    #[error("state diverged at t = {time:.6} s ({detail})")]
    DivergedState { time: f64, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("recursive least squares update produced a non-finite value")]
    NonFiniteUpdate,

    #[error("control law is not realizable: |b0 + rho| = {denominator:e}")]
    UnrealizableLaw { denominator: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Attach a simulation time to a divergence error raised by a time-agnostic routine.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::DivergedState { detail, .. } => Error::DivergedState { time: t, detail },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
