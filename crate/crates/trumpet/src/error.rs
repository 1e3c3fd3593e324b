//! Crate-wide error type and exit-code mapping.

/// Error type shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or dimension mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid argument or inconsistent specification.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// NaN or Inf encountered at a module boundary.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Numerical failure (singular system, non-convergence, rank deficiency).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file problem; names the offending key where possible.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset loading or format problem.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint container problem (magic, CRC, missing tensor).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Iterative solver exceeded the divergence guard.
    #[error("solver diverged at iteration {iter} (loss {loss:.3e})")]
    Diverged {
        iter: usize,
        loss: f64,
        /// Per-iteration losses recorded up to the abort.
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract: 0 ok, 1 property failure, 2 usage/config,
    /// 3 I/O or format, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Invalid(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Checkpoint(_) => 3,
            Error::Shape(_) | Error::NonFinite(_) | Error::Numerical(_) | Error::Diverged { .. } => 4,
        }
    }
}
