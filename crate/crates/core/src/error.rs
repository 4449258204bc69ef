use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("tensors from different graphs combined in {0}")]
    GraphMismatch(&'static str),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("diverged: {0}")]
    Divergence(String),
    #[error("span condition violated: rank {rank} < {dim}; the one-step guarantee needs the shifted initial offsets to span the parameter space")]
    SpanCondition { rank: usize, dim: usize },
    #[error("checkpoint field `{field}`: {reason}")]
    Checkpoint { field: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context()))
    }
}
