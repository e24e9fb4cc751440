use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank {rank} is out of range 1..={max} for a {rows}x{cols} matrix")]
    InvalidRank {
        rank: usize,
        max: usize,
        rows: usize,
        cols: usize,
    },

    #[error("keep count {keep} is out of range 0..={total}")]
    InvalidBudget { keep: usize, total: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("corpus too short: {len} tokens, need at least {needed}")]
    CorpusTooShort { len: usize, needed: usize },

    #[error("vocabulary mismatch: {0}")]
    Vocab(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("slot {0} is already compressed")]
    AlreadyCompressed(String),

    #[error("compressed parameter count {compressed} is not below the baseline {base}")]
    DegenerateCompression { base: f64, compressed: f64 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
