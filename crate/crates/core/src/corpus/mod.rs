//! Tokenization, vocabulary and contiguous-stream batching.

mod batch;
mod vocab;

pub use batch::{batchify, split_stream, BatchedCorpus, Window};
pub use vocab::{tokenize, TokenMode, Vocabulary, EOS, UNK};

pub type TokenId = u32;
