use thiserror::Error;

/// Errors raised by model construction and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input; `path` names the offending field.
    #[error("invalid input at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("time {t} outside control horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("vertex unitary has an eigenvalue at distance {distance:e} from -1, inside the gap band")]
    GapViolation { distance: f64 },

    #[error("matrix is not Hermitian positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("form is not semibounded on the sampled control box (lower bound {0:e})")]
    NotSemibounded(f64),

    #[error("gauge endpoint mismatch {mismatch:e} at vertex `{vertex}`")]
    GaugeMismatch { vertex: String, mismatch: f64 },

    #[error("control is not differentiable on the requested interval (kink at t = {0})")]
    NotDifferentiable(f64),

    #[error("dense propagator for {dofs} unknowns exceeds the memory budget of {limit}")]
    MemoryBudget { dofs: usize, limit: usize },

    #[error("mollifier width {sigma} too large for the shortest piece {piece}")]
    MollifierTooWide { sigma: f64, piece: f64 },

    #[error("source and target states have no coupling through the drive (|b| = {0:e})")]
    ZeroCoupling(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }

    /// True for input validation failures, false for numerical ones.
    pub fn is_schema(&self) -> bool {
        matches!(self, Error::Schema { .. } | Error::OutOfHorizon { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
