use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error("degenerate face {face} (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} did not converge (residual {residual:e})")]
    Convergence { what: String, residual: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("degenerate elements: {elements:?}")]
    Degeneracy { elements: Vec<usize> },

    #[error("boundary composition d∘d is nonzero from degree {degree} to degree {}", degree - 2)]
    Inconsistent { degree: usize },

    #[error("boundary of A-generator {from} has a B component {to}")]
    ClosureViolation { from: String, to: String },

    #[error("line search stagnated after {iterations} iterations")]
    Stagnation { iterations: usize, record: Box<crate::flow::CriticalRecord> },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{module}: {source}")]
    Context { module: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The innermost error beneath any module context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
