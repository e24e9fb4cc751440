//! Fixtures shared by the criterion benches.

use lrlstm_core::corpus::{TokenMode, Vocabulary};
use lrlstm_core::lstm::{LstmLm, ModelConfig, Recurrence};
use lrlstm_core::pipeline::{compress_model, CompressionSpec, Method, Scope, Target};

/// A character vocabulary of `size` entries (`size >= 2`).
pub fn vocab(size: usize) -> Vocabulary {
    let text: String = (0..size - 2).map(|i| char::from_u32(0x4e00 + i as u32).unwrap()).collect();
    Vocabulary::build(&text, TokenMode::Char, 1).unwrap()
}

/// Randomly initialized model with `layers` layers of width `dim`.
pub fn model(dim: usize, layers: usize, vocab_size: usize) -> LstmLm {
    let cfg = ModelConfig {
        vocab_size,
        emb_dim: dim,
        hidden_dim: dim,
        num_layers: layers,
        tied: false,
    };
    LstmLm::new_random(cfg, vocab(vocab_size), 0).unwrap()
}

/// `model` with both recurrences compressed at `rank`.
pub fn compressed(model: &LstmLm, method: Method, rank: usize) -> LstmLm {
    let spec = CompressionSpec::new(method, Target::Both, Scope::PerGate, rank);
    let (m, _) = compress_model(model, &spec).unwrap();
    debug_assert!(m.slot(0, Recurrence::Wh).param_count() < model.slot(0, Recurrence::Wh).param_count());
    m
}
