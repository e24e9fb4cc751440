use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::factor::{check_rank, prune_magnitude, rank_to_keep_count, semi_nmf, truncated_svd, PrunedMatrix, SemiNmfOptions};
use crate::lstm::{LstmLm, Recurrence, SlotKind, WeightSlot};
use crate::tensor::{Matrix, Real};
use crate::{Error, Result};

macro_rules! str_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!(
                        "unknown {} {s:?} (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "svd")]
    Svd,
    #[serde(rename = "semi-nmf")]
    SemiNmf,
    #[serde(rename = "prune")]
    Prune,
}

str_enum!(Method { Svd => "svd", SemiNmf => "semi-nmf", Prune => "prune" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "w_i")]
    Wi,
    #[serde(rename = "w_h")]
    Wh,
    #[serde(rename = "both")]
    Both,
}

str_enum!(Target { Wi => "w_i", Wh => "w_h", Both => "both" });

impl Target {
    pub fn recurrences(self) -> &'static [Recurrence] {
        match self {
            Target::Wi => &[Recurrence::Wi],
            Target::Wh => &[Recurrence::Wh],
            Target::Both => &[Recurrence::Wi, Recurrence::Wh],
        }
    }
}

/// Whether each gate block gets its own factors or the stacked `4H x n`
/// matrix is treated as one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    #[default]
    #[serde(rename = "per-gate")]
    PerGate,
    #[serde(rename = "stacked")]
    Stacked,
}

str_enum!(Scope { PerGate => "per-gate", Stacked => "stacked" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSpec {
    pub method: Method,
    pub target: Target,
    #[serde(default)]
    pub scope: Scope,
    pub rank: usize,
    /// Layer indices to compress; `None` means every layer.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default)]
    pub semi_nmf: SemiNmfOptions,
}

impl CompressionSpec {
    pub fn new(method: Method, target: Target, scope: Scope, rank: usize) -> Self {
        Self {
            method,
            target,
            scope,
            rank,
            layers: None,
            semi_nmf: SemiNmfOptions::default(),
        }
    }

    fn selected_layers(&self, num_layers: usize) -> Result<Vec<usize>> {
        match &self.layers {
            None => Ok((0..num_layers).collect()),
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::InvalidShape("empty layer list".into()));
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if let Some(&bad) = sorted.iter().find(|&&l| l >= num_layers) {
                    return Err(Error::InvalidShape(format!("layer {bad} out of range (model has {num_layers})")));
                }
                Ok(sorted)
            }
        }
    }

    /// Row-block height the rank applies to for a `4H x cols` slot.
    pub fn block_rows(&self, hidden: usize) -> usize {
        match self.scope {
            Scope::PerGate => hidden,
            Scope::Stacked => 4 * hidden,
        }
    }
}

/// Outcome for one replaced slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub layer: usize,
    pub target: Recurrence,
    pub shape: (usize, usize),
    pub kind: SlotKind,
    pub params_before: usize,
    pub params_after: usize,
    /// Bits needed for the pruning mask, reported apart from parameters.
    pub mask_bits: usize,
    /// `||W - W_eff||_F`.
    pub recon_error: f64,
    /// `recon_error / ||W||_F`.
    pub relative_error: f64,
}

impl SlotReport {
    /// True when the replacement does not reduce the parameter count.
    pub fn negative_savings(&self) -> bool {
        self.params_after >= self.params_before
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub spec: CompressionSpec,
    pub slots: Vec<SlotReport>,
    pub model_params_before: usize,
    pub model_params_after: usize,
}

impl CompressionReport {
    pub fn negative_savings(&self) -> bool {
        self.slots.iter().any(SlotReport::negative_savings)
    }
}

/// Compresses one dense `4H x cols` matrix per `spec`.
pub fn compress_matrix<T: Real>(w: &Matrix<T>, hidden: usize, spec: &CompressionSpec) -> Result<WeightSlot<T>> {
    let (rows, cols) = w.shape();
    if rows != 4 * hidden {
        return Err(Error::Shape(format!("expected {} rows for hidden size {hidden}, got {rows}", 4 * hidden)));
    }
    let bm = spec.block_rows(hidden);
    check_rank(bm, cols, spec.rank)?;
    let blocks: Vec<Matrix<T>> = (0..rows / bm).map(|b| w.row_block(b * bm, bm)).collect();
    match spec.method {
        Method::Svd => WeightSlot::factorized(blocks.iter().map(|b| truncated_svd(b, spec.rank)).collect::<Result<_>>()?),
        Method::SemiNmf => WeightSlot::factorized(
            blocks
                .iter()
                .map(|b| semi_nmf(b, spec.rank, &spec.semi_nmf).map(|o| o.factors))
                .collect::<Result<_>>()?,
        ),
        Method::Prune => {
            let keep = rank_to_keep_count(bm, cols, spec.rank);
            let mut mask = Vec::with_capacity(w.len());
            for b in &blocks {
                mask.extend_from_slice(prune_magnitude(b, keep)?.mask());
            }
            Ok(WeightSlot::Pruned(PrunedMatrix::new(w.clone(), mask)?))
        }
    }
}

/// Returns a copy of `model` with the targeted dense slots replaced. The
/// input model is not modified.
pub fn compress_model<T: Real>(model: &LstmLm<T>, spec: &CompressionSpec) -> Result<(LstmLm<T>, CompressionReport)> {
    spec.semi_nmf.validate()?;
    let cfg = model.config();
    let layers = spec.selected_layers(cfg.num_layers)?;
    let hidden = cfg.hidden_dim;
    for &l in &layers {
        for &which in spec.target.recurrences() {
            let slot = model.slot(l, which);
            if slot.kind() != SlotKind::Dense {
                return Err(Error::AlreadyCompressed(format!("layers.{l}.{}", which.as_str())));
            }
            check_rank(spec.block_rows(hidden), slot.shape().1, spec.rank)?;
        }
    }

    let mut out = model.clone();
    let mut slots = Vec::new();
    for &l in &layers {
        for &which in spec.target.recurrences() {
            let WeightSlot::Dense(w) = model.slot(l, which) else { unreachable!("checked above") };
            let new_slot = compress_matrix(w, hidden, spec)?;
            let recon_error = w.frobenius_distance(&new_slot.effective());
            let norm = w.frobenius();
            slots.push(SlotReport {
                layer: l,
                target: which,
                shape: w.shape(),
                kind: new_slot.kind(),
                params_before: w.len(),
                params_after: new_slot.param_count(),
                mask_bits: new_slot.mask().map_or(0, <[bool]>::len),
                recon_error,
                relative_error: if norm > 0.0 { recon_error / norm } else { 0.0 },
            });
            out.replace_slot(l, which, new_slot)?;
        }
    }
    let report = CompressionReport {
        spec: spec.clone(),
        slots,
        model_params_before: model.param_counts().total,
        model_params_after: out.param_counts().total,
    };
    Ok((out, report))
}
