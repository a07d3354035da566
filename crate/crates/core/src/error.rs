use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing configuration (bad counts, coefficients, presets).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// A matrix that must be SPD failed to factor. For local and coarse
    /// matrices this usually means the penalty parameter is too small.
    #[error("{context}: matrix is not positive definite (penalty parameter too small?)")]
    NotPositiveDefinite { context: String },

    #[error("dof numbering error: {0}")]
    Numbering(String),

    #[error("dimension {dim} exceeds the dense-path guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
