use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("snippet index {index} out of range for video with {len} snippets")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("value {0} outside the unit interval")]
    Domain(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no integral erased segment at step 1")]
    ZeroBaseline,

    #[error("invalid input file: {0}")]
    InvalidFile(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("{0}")]
    Runtime(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from invalid user input (as opposed to a runtime failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::ShapeMismatch(_)
                | Error::IndexOutOfRange { .. }
                | Error::Domain(_)
                | Error::InvalidConfig(_)
                | Error::EmptyDataset
                | Error::InvalidFile(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
