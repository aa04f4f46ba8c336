use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max asymmetry {max_asymmetry:.3e})")]
    NotHermitian { max_asymmetry: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exponent {exponent:.3e} exceeds the representable range")]
    Overflow { exponent: f64 },

    #[error("phase-space evolution blows up (largest entry {magnitude:.3e})")]
    Blowup { magnitude: f64 },

    #[error("all thermal weights underflow (beta * spread = {spread:.3e})")]
    Underflow { spread: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("imaginary residue {residue:.3e} exceeds tolerance")]
    ImaginaryResidue { residue: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("fit rejected: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
