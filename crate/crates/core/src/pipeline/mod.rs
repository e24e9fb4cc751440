//! Applying compression specs, fine-tuning, and checkpoint persistence.

mod checkpoint;
mod compress;
mod fit;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, ArrayEntry, Dtype, Manifest, VocabEntry,
    FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
pub use compress::{compress_matrix, compress_model, CompressionReport, CompressionSpec, Method, Scope, SlotReport, Target};
pub use fit::{finetune, fit, EpochRecord, FitOptions, FitOutcome};
