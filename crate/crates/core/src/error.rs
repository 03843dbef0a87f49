use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inadmissible state{}: {reason}", element.map(|e| format!(" in element {e}")).unwrap_or_default())]
    Inadmissible {
        element: Option<usize>,
        reason: String,
    },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("non-finite solution at step {step} (t = {time:e})")]
    BlowUp { step: usize, time: f64 },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attaches an element index to an admissibility error raised by a
    /// pointwise routine that does not know where it was evaluated.
    pub fn in_element(self, e: usize) -> Self {
        match self {
            Error::Inadmissible { element: None, reason } => Error::Inadmissible {
                element: Some(e),
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
