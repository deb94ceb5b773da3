use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Evaluation outside the domain of definition (site, energy, argument).
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix entries left the representable range; use the log-scaled variant.
    #[error("scale overflow after {steps} factors")]
    ScaleOverflow { steps: usize },

    /// A request would exceed a configured memory or work cap.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The lattice window is too small for the requested accuracy.
    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("invalid energy grid: {0}")]
    InvalidGrid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("band count mismatch at k={k}: found {found}, expected {expected}")]
    BandCount { k: usize, found: usize, expected: usize },

    #[error("band classification failed: {0}")]
    Classification(String),

    #[error("accuracy not reached: {0}")]
    Accuracy(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
