use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("interaction graph is empty")]
    EmptyGraph,

    #[error("({0}, {1}) is not an edge of the interaction graph")]
    NotAnEdge(usize, usize),

    #[error("non-finite loss while probing parameter {index}")]
    NonFiniteProbe { index: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("stale embedding cache: cache version {cache:016x}, model version {model:016x}")]
    StaleCache { cache: u64, model: u64 },

    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::DimensionMismatch { op, detail: detail.into() }
}
