use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bench::{bench_inference, Timing};
use super::eval::{efficiency, perplexity};
use crate::corpus::BatchedCorpus;
use crate::factor::{rank_to_keep_count, SemiNmfOptions};
use crate::lstm::LstmLm;
use crate::pipeline::{compress_model, finetune, CompressionSpec, FitOptions, Method, Scope, Target};
use crate::tensor::{abs_moments, singular_values, Matrix, NormStats, Real};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "rank,method,target,scope,layer,gate,params_before,params_after,l1,l1_std,nuclear,ppl,e_r,infer_ms_mean,infer_ms_std";
pub const CSV_HEADER_REDUCED: &str = "rank,method,target,scope,layer,gate,params_before,params_after,l1,l1_std,nuclear";

/// Rank grid used when none is given; ranks that do not fit the model or do
/// not save parameters are dropped.
pub const DEFAULT_RANKS: [usize; 6] = [10, 50, 100, 200, 300, 400];

/// Gate row block of a recurrence matrix, or the whole matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    I,
    F,
    O,
    C,
    All,
}

impl Gate {
    pub const EACH: [Gate; 5] = [Gate::I, Gate::F, Gate::O, Gate::C, Gate::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Gate::I => "i",
            Gate::F => "f",
            Gate::O => "o",
            Gate::C => "c",
            Gate::All => "all",
        }
    }

    fn block(self) -> Option<usize> {
        match self {
            Gate::I => Some(0),
            Gate::F => Some(1),
            Gate::O => Some(2),
            Gate::C => Some(3),
            Gate::All => None,
        }
    }
}

/// `slot` emits one aggregate row per compressed model; `gate` adds rows per
/// layer and gate block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Slot,
    Gate,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "slot" => Ok(Self::Slot),
            "gate" => Ok(Self::Gate),
            _ => Err(format!("unknown granularity {s:?} (expected slot or gate)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub ranks: Vec<usize>,
    pub methods: Vec<Method>,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub semi_nmf: SemiNmfOptions,
}

/// Evaluation settings; without them only norm columns are produced.
pub struct SweepEval<'a> {
    pub valid: &'a BatchedCorpus,
    /// Training stream, epochs and options for fine-tuning each compressed
    /// model before evaluation.
    pub finetune: Option<(&'a BatchedCorpus, usize, FitOptions)>,
    pub repetitions: usize,
    pub warmup: usize,
    pub max_windows: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub ppl: f64,
    pub e_r: f64,
    pub infer_ms_mean: f64,
    pub infer_ms_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `None` for the uncompressed baseline.
    pub rank: Option<usize>,
    /// `None` for the uncompressed baseline.
    pub method: Option<Method>,
    pub target: Target,
    pub scope: Scope,
    /// `None` aggregates over every layer.
    pub layer: Option<usize>,
    pub gate: Gate,
    /// Whole-model parameter counts.
    pub params_before: usize,
    pub params_after: usize,
    pub norms: NormStats,
    pub measured: Option<Measured>,
}

impl ReportRow {
    fn cells(&self) -> Vec<String> {
        let mut cells = vec![
            self.rank.map_or_else(|| "full".to_string(), |r| r.to_string()),
            self.method.map_or("baseline", Method::as_str).to_string(),
            self.target.to_string(),
            self.scope.to_string(),
            self.layer.map_or_else(|| "all".to_string(), |l| l.to_string()),
            self.gate.as_str().to_string(),
            self.params_before.to_string(),
            self.params_after.to_string(),
            self.norms.l1.to_string(),
            self.norms.l1_std.to_string(),
            self.norms.nuclear.to_string(),
        ];
        if let Some(m) = &self.measured {
            cells.extend([m.ppl, m.e_r, m.infer_ms_mean, m.infer_ms_std].map(|x| x.to_string()));
        }
        cells
    }
}

impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cells().join(","))
    }
}

/// Writes rows as CSV. The full schema is used when rows carry measurements
/// (with `machine` as a leading `# machine:` comment), the reduced schema
/// otherwise. Mixed rows are rejected.
pub fn write_csv(rows: &[ReportRow], machine: Option<&str>, mut out: impl Write) -> Result<()> {
    let full = rows.first().is_some_and(|r| r.measured.is_some());
    if rows.iter().any(|r| r.measured.is_some() != full) {
        return Err(Error::InvalidShape("rows mix measured and unmeasured schemas".into()));
    }
    let io = |e| Error::io("<csv>", e);
    if full {
        if let Some(m) = machine {
            writeln!(out, "# machine: {m}").map_err(io)?;
        }
        writeln!(out, "{CSV_HEADER}").map_err(io)?;
    } else {
        writeln!(out, "{CSV_HEADER_REDUCED}").map_err(io)?;
    }
    for r in rows {
        writeln!(out, "{r}").map_err(io)?;
    }
    Ok(())
}

/// Ranks from `candidates` that fit every targeted slot and strictly reduce
/// its parameter count.
pub fn feasible_ranks<T: Real>(model: &LstmLm<T>, candidates: &[usize], targets: &[Target], scope: Scope) -> Vec<usize> {
    let cfg = model.config();
    let spec_rows = CompressionSpec::new(Method::Svd, Target::Wh, scope, 1).block_rows(cfg.hidden_dim);
    candidates
        .iter()
        .copied()
        .filter(|&r| {
            targets.iter().flat_map(|t| t.recurrences()).all(|&which| {
                (0..cfg.num_layers).all(|l| {
                    let cols = model.slot(l, which).shape().1;
                    r >= 1 && r <= spec_rows.min(cols) && rank_to_keep_count(spec_rows, cols, r) < spec_rows * cols
                })
            })
        })
        .collect()
}

/// The matrix whose norms a row reports: the gate block of the targeted
/// recurrence, with `both` placing `W_i` and `W_h` side by side.
fn view<T: Real>(model: &LstmLm<T>, target: Target, layer: usize, gate: Gate) -> Matrix<f64> {
    let h = model.config().hidden_dim;
    let parts: Vec<Matrix<f64>> = target
        .recurrences()
        .iter()
        .map(|&which| {
            let w = model.slot(layer, which).effective().cast::<f64>();
            match gate.block() {
                Some(b) => w.row_block(b * h, h),
                None => w,
            }
        })
        .collect();
    if parts.len() == 1 {
        return parts.into_iter().next().expect("one part");
    }
    let rows = parts[0].rows();
    let widths: Vec<usize> = parts.iter().map(Matrix::cols).collect();
    Matrix::from_fn(rows, widths.iter().sum(), |i, mut j| {
        for (p, &w) in parts.iter().zip(&widths) {
            if j < w {
                return p.get(i, j);
            }
            j -= w;
        }
        unreachable!("column in range")
    })
}

/// Norms summed over `mats`, with `l1_std` pooled over all their entries.
fn pooled_norms(mats: &[Matrix<f64>]) -> Result<NormStats> {
    let values: Vec<f64> = mats.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    let (l1, l1_std) = abs_moments(values.iter().copied());
    let mut nuclear = 0.0;
    for m in mats {
        nuclear += singular_values(m)?.iter().sum::<f64>();
    }
    Ok(NormStats { l1, l1_std, nuclear })
}

fn rows_for<T: Real>(
    model: &LstmLm<T>,
    granularity: Granularity,
    head: impl Fn(Option<usize>, Gate, NormStats) -> ReportRow,
    target: Target,
) -> Result<Vec<ReportRow>> {
    let layers = model.config().num_layers;
    let mut out = Vec::new();
    if granularity == Granularity::Gate {
        for l in 0..layers {
            for gate in Gate::EACH {
                out.push(head(Some(l), gate, pooled_norms(&[view(model, target, l, gate)])?));
            }
        }
    }
    let all: Vec<_> = (0..layers).map(|l| view(model, target, l, Gate::All)).collect();
    out.push(head(None, Gate::All, pooled_norms(&all)?));
    Ok(out)
}

/// Compresses `model` for every (rank, method, target) and reports norms of
/// the effective recurrence matrices, plus baseline rows (rank `full`) per
/// target first. With `eval`, each row also carries validation perplexity,
/// E(r) against the baseline and inference timing; baseline rows report
/// `e_r = 0`.
pub fn norm_sweep<T: Real>(model: &LstmLm<T>, opts: &SweepOptions, eval: Option<&SweepEval<'_>>) -> Result<Vec<ReportRow>> {
    if opts.ranks.is_empty() || opts.methods.is_empty() || opts.targets.is_empty() {
        return Err(Error::InvalidShape("sweep needs at least one rank, method and target".into()));
    }
    let base_params = model.param_counts().total;
    let measure = |m: &LstmLm<T>| -> Result<(f64, Timing)> {
        let e = eval.expect("called with eval");
        let ppl = perplexity(m, e.valid)?.perplexity;
        Ok((ppl, bench_inference(m, e.valid, e.repetitions, e.warmup, e.max_windows)?))
    };
    let base_measure = eval.map(|_| measure(model)).transpose()?;

    let mut rows = Vec::new();
    for &target in &opts.targets {
        let measured = base_measure.as_ref().map(|(ppl, t)| Measured {
            ppl: *ppl,
            e_r: 0.0,
            infer_ms_mean: t.ms_mean,
            infer_ms_std: t.ms_std,
        });
        rows.extend(rows_for(
            model,
            opts.granularity,
            |layer, gate, norms| ReportRow {
                rank: None,
                method: None,
                target,
                scope: opts.scope,
                layer,
                gate,
                params_before: base_params,
                params_after: base_params,
                norms,
                measured,
            },
            target,
        )?);
    }

    for &rank in &opts.ranks {
        for &method in &opts.methods {
            for &target in &opts.targets {
                let mut spec = CompressionSpec::new(method, target, opts.scope, rank);
                spec.semi_nmf = opts.semi_nmf.clone();
                let (mut compressed, _) = compress_model(model, &spec)?;
                let mut measured = None;
                if let (Some(e), Some((base_ppl, _))) = (eval, &base_measure) {
                    if let Some((train, epochs, fit)) = &e.finetune {
                        compressed = finetune(&compressed, train, e.valid, *epochs, fit)?.model;
                    }
                    let (ppl, timing) = measure(&compressed)?;
                    let params = compressed.param_counts().total;
                    measured = Some(Measured {
                        ppl,
                        e_r: efficiency(*base_ppl, ppl, base_params as f64, params as f64, true)?,
                        infer_ms_mean: timing.ms_mean,
                        infer_ms_std: timing.ms_std,
                    });
                }
                let params_after = compressed.param_counts().total;
                rows.extend(rows_for(
                    &compressed,
                    opts.granularity,
                    |layer, gate, norms| ReportRow {
                        rank: Some(rank),
                        method: Some(method),
                        target,
                        scope: opts.scope,
                        layer,
                        gate,
                        params_before: base_params,
                        params_after,
                        norms,
                        measured,
                    },
                    target,
                )?);
            }
        }
    }
    Ok(rows)
}
