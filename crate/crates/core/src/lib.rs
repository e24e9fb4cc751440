//! Training, low-rank/pruning compression and analysis of small LSTM
//! language models.

mod error;
pub mod corpus;
pub mod factor;
pub mod lstm;
pub mod metrics;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use factor::{FactorizedMatrix, PrunedMatrix};
pub use tensor::{Matrix, NormStats, Real};
