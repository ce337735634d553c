use thiserror::Error;

use crate::sfi::FeatureKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite value produced by {0}")]
    Numeric(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("missing cached feature for timestep {timestep}, layer {layer}, kind {kind}")]
    Injection {
        timestep: usize,
        layer: usize,
        kind: FeatureKind,
    },

    #[error("training diverged at step {step} (loss {loss})")]
    Training { step: usize, loss: f64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
