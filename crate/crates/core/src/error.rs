use thiserror::Error;

pub type Result<T> = std::result::Result<T, VolError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical overflow at index {index}")]
    NumericalOverflow { index: usize },
    #[error("nonstationary model: {0}")]
    Nonstationary(String),
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("misaligned tracks: {0}")]
    Alignment(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("search failed: no candidate converged ({0})")]
    SearchFailed(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Coarse classification used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl VolError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            VolError::Usage(_) | VolError::Config(_) => ErrorKind::Usage,
            VolError::InsufficientData(_)
            | VolError::Domain(_)
            | VolError::DegenerateInput(_)
            | VolError::Alignment(_)
            | VolError::Parse { .. }
            | VolError::Io(_) => ErrorKind::Data,
            VolError::InvalidParameter(_)
            | VolError::NumericalOverflow { .. }
            | VolError::Nonstationary(_)
            | VolError::Divergence { .. }
            | VolError::SearchFailed(_) => ErrorKind::Numerical,
        }
    }

    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            VolError::InsufficientData(_) => "insufficient_data",
            VolError::Domain(_) => "domain",
            VolError::Config(_) => "config",
            VolError::DegenerateInput(_) => "degenerate_input",
            VolError::InvalidParameter(_) => "invalid_parameter",
            VolError::NumericalOverflow { .. } => "numerical_overflow",
            VolError::Nonstationary(_) => "nonstationary",
            VolError::Divergence { .. } => "divergence",
            VolError::Alignment(_) => "alignment",
            VolError::Usage(_) => "usage",
            VolError::SearchFailed(_) => "search_failed",
            VolError::Parse { .. } => "parse",
            VolError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for VolError {
    fn from(e: std::io::Error) -> Self {
        VolError::Io(e.to_string())
    }
}
