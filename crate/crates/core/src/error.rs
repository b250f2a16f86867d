use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The owner pattern has zero energy, so no mixing weight exists.
    #[error("degenerate trigger pattern: owner clip has zero energy")]
    DegeneratePattern,

    #[error("unsupported or malformed WAV: {0}")]
    WavFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A text that the stego codec cannot have produced.
    #[error("undecodable text at step {step}: {reason}")]
    Undecodable { step: usize, reason: String },

    #[error("stego encoding failed: {0}")]
    Encoding(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Divergence { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("error rate undefined: reference corpus is empty")]
    UndefinedRate,

    /// The black-box interface failed part-way through extraction.
    #[error("prediction failed on trigger {failed_at} after {} completed queries: {message}", completed.len())]
    PartialExtraction {
        completed: Vec<String>,
        failed_at: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
