use thiserror::Error;

/// Errors surfaced by the regression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Point dimension does not match the kernel or measure domain.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two estimates were combined that do not share a kernel.
    #[error("kernel mismatch between embedding estimates")]
    KernelMismatch,

    /// More eigenpairs requested than the eigensystem can provide.
    #[error("requested {requested} eigenpairs but only {available} are available")]
    NotEnoughEigenpairs { requested: usize, available: usize },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }
}
