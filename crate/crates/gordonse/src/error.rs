use thiserror::Error;

/// Errors surfaced by the library. Violations of inequality checks are data
/// (see [`crate::analysis::ScanResult`]), not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rank-deficient design ({rows}x{cols}), condition estimate {condition:e}")]
    RankDeficient { rows: usize, cols: usize, condition: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("negative variance radicand {estimate:e} (stderr {stderr:e})")]
    NegativeVariance { estimate: f64, stderr: f64 },

    #[error("no closed form for custom weight function; use the oracle")]
    NoClosedForm,

    #[error("oversampling too small: 1 - n v'(A'A)^-1 v = {radicand:e}")]
    KappaTooSmall { radicand: f64 },

    #[error("omega lies in the column span of A (residual norm {residual:e})")]
    OmegaInSpan { residual: f64 },

    #[error("minimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("insufficient pre-floor trajectory: {usable} usable points, need at least 4; use a smaller sigma or start further from the truth")]
    InsufficientTrajectory { usable: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unknown figure id `{0}`; valid ids: 1, 2, 3a, 3b, 4, 6, 7a, 7b, 8, 9a, 9b")]
    UnknownFigure(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
