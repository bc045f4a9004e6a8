use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("combinatorial budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::UnsupportedSize(_) => "unsupported_size",
            Error::DegenerateTrace(_) => "degenerate_trace",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::BudgetExceeded(_) => "budget_exceeded",
            Error::Column { .. } => "column_failure",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
