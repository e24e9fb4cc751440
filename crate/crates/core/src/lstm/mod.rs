//! Stacked LSTM language model with swappable recurrence weight storage.

mod cell;
mod model;
mod slot;
mod train;

pub use cell::GateWeights;
pub use model::{Forward, ForwardCache, LstmLm, LstmState, ModelConfig, ParamCounts, ParamView, Recurrence};
pub use slot::{SlotKind, WeightSlot};
pub use train::{cross_entropy, Gradients, Sgd, StepStats, TrainOptions};

#[cfg(test)]
mod tests;
