use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(
        "eigensolver did not converge after {iterations} iterations \
         (achieved residual {residual:.3e}, tolerance {tolerance:.1e})"
    )]
    Convergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("autodiff: {0}")]
    Autodiff(String),
    #[error("training diverged in fold {fold} at epoch {epoch}: {detail}")]
    Divergence {
        fold: usize,
        epoch: usize,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Coarse category used for exit codes and machine-readable error lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Convergence,
    Config,
    Runtime,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Data => "data",
            ErrorClass::Convergence => "convergence",
            ErrorClass::Config => "config",
            ErrorClass::Runtime => "runtime",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema(_)
            | Error::Ingestion(_)
            | Error::Split(_)
            | Error::Format(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::Convergence { .. } => ErrorClass::Convergence,
            Error::Config(_) => ErrorClass::Config,
            _ => ErrorClass::Runtime,
        }
    }
}
