use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("degenerate input to {op}: {msg}")]
    Degenerate { op: &'static str, msg: String },

    #[error("autograd: {0}")]
    Graph(String),

    #[error("optimizer: non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("EDF parse error at byte {offset}: {msg}")]
    Edf { offset: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("channel mapping: {0}")]
    ChannelMap(String),

    #[error("sequence too short: {0}")]
    TooShort(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("cache file {path}: {msg}")]
    Cache { path: PathBuf, msg: String },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape {
            op,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numerics rather than by user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
                | Error::Degenerate { .. }
        )
    }
}
