//! `<dir>/manifest.json` plus `<dir>/weights.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenMode, Vocabulary};
use crate::factor::{FactorizedMatrix, PrunedMatrix};
use crate::lstm::{GateWeights, LstmLm, ModelConfig, SlotKind, WeightSlot};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    /// Little-endian IEEE-754 binary32, row-major.
    F32,
    /// Packed booleans, least significant bit first, zero padded to a byte.
    Bits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: Dtype,
    pub offset: u64,
    pub nbytes: u64,
    /// Storage form of the weight slot this array belongs to.
    pub slot: SlotKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub mode: TokenMode,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab: VocabEntry,
    pub arrays: Vec<ArrayEntry>,
}

fn pack_bits(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<bool>> {
    let mask: Vec<bool> = (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    let padding_clear = (len..bytes.len() * 8).all(|i| bytes[i / 8] >> (i % 8) & 1 == 0);
    if !padding_clear {
        return Err(Error::Format("mask padding bits are set".into()));
    }
    Ok(mask)
}

struct Writer {
    arrays: Vec<ArrayEntry>,
    blob: Vec<u8>,
}

impl Writer {
    fn push(&mut self, name: String, shape: (usize, usize), dtype: Dtype, slot: SlotKind, bytes: Vec<u8>) {
        self.arrays.push(ArrayEntry {
            name,
            shape: [shape.0, shape.1],
            dtype,
            offset: self.blob.len() as u64,
            nbytes: bytes.len() as u64,
            slot,
        });
        self.blob.extend(bytes);
    }

    fn matrix(&mut self, name: String, m: &Matrix<f32>, slot: SlotKind) {
        let bytes = m.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
        self.push(name, m.shape(), Dtype::F32, slot, bytes);
    }

    fn vector(&mut self, name: String, v: &[f32]) {
        let bytes = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        self.push(name, (1, v.len()), Dtype::F32, SlotKind::Dense, bytes);
    }

    fn slot(&mut self, base: String, slot: &WeightSlot<f32>) {
        match slot {
            WeightSlot::Dense(w) => self.matrix(base, w, SlotKind::Dense),
            WeightSlot::Pruned(p) => {
                self.matrix(base.clone(), p.weights(), SlotKind::Pruned);
                self.push(format!("{base}.mask"), p.shape(), Dtype::Bits, SlotKind::Pruned, pack_bits(p.mask()));
            }
            WeightSlot::Factorized(blocks) => {
                for (b, f) in blocks.iter().enumerate() {
                    self.matrix(format!("{base}.u{b}"), f.u(), SlotKind::Factorized);
                    self.matrix(format!("{base}.v{b}"), f.v(), SlotKind::Factorized);
                }
            }
        }
    }
}

/// Serializes `model` into the manifest and blob contents.
pub fn encode_checkpoint(model: &LstmLm<f32>) -> (Manifest, Vec<u8>) {
    let mut w = Writer {
        arrays: Vec::new(),
        blob: Vec::new(),
    };
    w.matrix("embedding".into(), model.embedding(), SlotKind::Dense);
    for (l, layer) in model.layers().iter().enumerate() {
        w.slot(format!("layers.{l}.w_i"), layer.w_i());
        w.slot(format!("layers.{l}.w_h"), layer.w_h());
        w.vector(format!("layers.{l}.bias"), layer.bias());
    }
    if let Some(d) = model.decoder() {
        w.matrix("decoder.weight".into(), d, SlotKind::Dense);
    }
    w.vector("decoder.bias".into(), model.decoder_bias());
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        vocab: VocabEntry {
            mode: model.vocab().mode(),
            tokens: model.vocab().tokens().to_vec(),
        },
        arrays: w.arrays,
    };
    (manifest, w.blob)
}

struct Reader<'a> {
    arrays: std::iter::Peekable<std::slice::Iter<'a, ArrayEntry>>,
    blob: &'a [u8],
}

impl<'a> Reader<'a> {
    fn next(&mut self, name: &str, dtype: Dtype) -> Result<&'a ArrayEntry> {
        let e = self
            .arrays
            .next()
            .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        if e.name != name || e.dtype != dtype {
            return Err(Error::Format(format!("expected {name} ({dtype:?}), found {} ({:?})", e.name, e.dtype)));
        }
        Ok(e)
    }

    fn bytes(&self, e: &ArrayEntry) -> &'a [u8] {
        &self.blob[e.offset as usize..(e.offset + e.nbytes) as usize]
    }

    fn floats(&self, e: &ArrayEntry) -> Vec<f32> {
        self.bytes(e)
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    fn matrix(&mut self, name: &str) -> Result<(Matrix<f32>, SlotKind)> {
        let e = self.next(name, Dtype::F32)?;
        let m = Matrix::new(e.shape[0], e.shape[1], self.floats(e)).map_err(|err| Error::Format(format!("{name}: {err}")))?;
        Ok((m, e.slot))
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        let e = self.next(name, Dtype::F32)?;
        if e.shape != [1, len] {
            return Err(Error::Format(format!("{name} has shape {:?}, expected [1, {len}]", e.shape)));
        }
        let v = self.floats(e);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("{name} has non-finite entries")));
        }
        Ok(v)
    }

    fn slot(&mut self, base: &str) -> Result<WeightSlot<f32>> {
        let kind = self.arrays.peek().map(|e| e.slot);
        match kind {
            Some(SlotKind::Dense) => Ok(WeightSlot::Dense(self.matrix(base)?.0)),
            Some(SlotKind::Pruned) => {
                let (w, _) = self.matrix(base)?;
                let name = format!("{base}.mask");
                let e = self.next(&name, Dtype::Bits)?;
                if e.shape != [w.rows(), w.cols()] {
                    return Err(Error::Format(format!("{name} shape differs from its weights")));
                }
                let mask = unpack_bits(self.bytes(e), w.len())?;
                if w.as_slice().iter().zip(&mask).any(|(x, &keep)| !keep && *x != 0.0) {
                    return Err(Error::Format(format!("{base} has nonzero masked entries")));
                }
                Ok(WeightSlot::Pruned(PrunedMatrix::new(w, mask).map_err(|err| Error::Format(err.to_string()))?))
            }
            Some(SlotKind::Factorized) => {
                let mut blocks = Vec::new();
                while self.arrays.peek().is_some_and(|e| e.name == format!("{base}.u{}", blocks.len())) {
                    let b = blocks.len();
                    let (u, _) = self.matrix(&format!("{base}.u{b}"))?;
                    let (v, _) = self.matrix(&format!("{base}.v{b}"))?;
                    blocks.push(FactorizedMatrix::new(u, v).map_err(|err| Error::Format(format!("{base}: {err}")))?);
                }
                WeightSlot::factorized(blocks).map_err(|err| Error::Format(format!("{base}: {err}")))
            }
            None => Err(Error::Format(format!("missing array {base}"))),
        }
    }
}

/// Rebuilds a model from manifest and blob, validating layout and shapes.
pub fn decode_checkpoint(manifest: &Manifest, blob: &[u8]) -> Result<LstmLm<f32>> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut expected = 0u64;
    for e in &manifest.arrays {
        let count = e.shape[0] as u64 * e.shape[1] as u64;
        let want = match e.dtype {
            Dtype::F32 => count * 4,
            Dtype::Bits => count.div_ceil(8),
        };
        if e.offset != expected || e.nbytes != want {
            return Err(Error::Format(format!(
                "array {} at offset {} with {} bytes, expected offset {expected} and {want} bytes",
                e.name, e.offset, e.nbytes
            )));
        }
        expected += want;
    }
    if blob.len() as u64 != expected {
        return Err(Error::Format(format!("weights blob has {} bytes, manifest describes {expected}", blob.len())));
    }
    let cfg = manifest.config.clone();
    let vocab = Vocabulary::from_tokens(manifest.vocab.mode, manifest.vocab.tokens.clone())
        .map_err(|err| Error::Format(err.to_string()))?;
    let mut r = Reader {
        arrays: manifest.arrays.iter().peekable(),
        blob,
    };
    let fmt = |err: Error| Error::Format(err.to_string());
    let (embedding, _) = r.matrix("embedding")?;
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let w_i = r.slot(&format!("layers.{l}.w_i"))?;
        let w_h = r.slot(&format!("layers.{l}.w_h"))?;
        let bias = r.vector(&format!("layers.{l}.bias"), 4 * cfg.hidden_dim)?;
        layers.push(GateWeights::new(w_i, w_h, bias).map_err(fmt)?);
    }
    let decoder = if cfg.tied { None } else { Some(r.matrix("decoder.weight")?.0) };
    let decoder_bias = r.vector("decoder.bias", cfg.vocab_size)?;
    if let Some(extra) = r.arrays.next() {
        return Err(Error::Format(format!("unexpected array {}", extra.name)));
    }
    LstmLm::from_parts(cfg, vocab, embedding, layers, decoder, decoder_bias).map_err(fmt)
}

pub fn save_checkpoint(model: &LstmLm<f32>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, blob) = encode_checkpoint(model);
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    json.push('\n');
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, blob).map_err(|e| Error::io(&wpath, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<LstmLm<f32>> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
    let wpath = dir.join(WEIGHTS_FILE);
    let blob = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
    decode_checkpoint(&manifest, &blob)
}
