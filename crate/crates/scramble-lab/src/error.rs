use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] scramble::Error),
    #[error("realization {index} failed: {source}")]
    Realization { index: usize, source: scramble::Error },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed curve file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl LabError {
    /// Process exit code: 2 for bad input, 3 for everything that fails during computation or output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Format { .. } => 2,
            Self::Numerical(scramble::Error::InvalidArgument(_)) => 2,
            _ => 3,
        }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
