use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::BatchedCorpus;
use crate::factor::FactorizedMatrix;
use crate::lstm::{LstmLm, LstmState, WeightSlot};
use crate::tensor::{prng_matrix, Real};
use crate::{Error, Result};

/// Wall-clock summary of repeated timed runs, in milliseconds per unit of
/// work (one batch window, or one matrix-vector product).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub ms_mean: f64,
    pub ms_std: f64,
    pub ms_median: f64,
    /// Per-repetition means.
    pub samples: Vec<f64>,
}

impl Timing {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        Self {
            ms_mean: mean,
            ms_std: var.sqrt(),
            ms_median: median,
            samples,
        }
    }

    /// `baseline / self` on medians.
    pub fn speedup_over(&self, baseline: &Timing) -> f64 {
        baseline.ms_median / self.ms_median
    }
}

fn check_reps(repetitions: usize, warmup: usize) -> Result<()> {
    if repetitions < 3 || warmup < 1 {
        return Err(Error::InvalidShape(format!(
            "timing needs at least 3 repetitions and 1 warmup run, got {repetitions} and {warmup}"
        )));
    }
    Ok(())
}

fn time_reps(repetitions: usize, warmup: usize, units: usize, mut run: impl FnMut() -> Result<()>) -> Result<Timing> {
    check_reps(repetitions, warmup)?;
    for _ in 0..warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3 / units as f64);
    }
    Ok(Timing::from_samples(samples))
}

/// Times dropout-free forward passes over the first `max_windows` windows
/// of `corpus` (all of them when `None`) on the calling thread.
pub fn bench_inference<T: Real>(
    model: &LstmLm<T>,
    corpus: &BatchedCorpus,
    repetitions: usize,
    warmup: usize,
    max_windows: Option<usize>,
) -> Result<Timing> {
    let windows: Vec<_> = corpus.windows().take(max_windows.unwrap_or(usize::MAX)).collect();
    if windows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    time_reps(repetitions, warmup, windows.len(), || {
        let mut state = LstmState::zeros(model.config(), corpus.batch_size());
        for w in &windows {
            let fwd = model.lm_forward(&w.input, w.batch_size, w.len, &state)?;
            black_box(&fwd.logits);
            state = fwd.state;
        }
        Ok(())
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatvecBench {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub dense: Timing,
    pub factorized: Timing,
    /// `mn / r(m + n)`.
    pub flop_ratio: f64,
    pub speedup: f64,
}

/// Dense `m x n` matrix-vector product against the rank-`r` factorized
/// form `u (v x)`, each timed over `iters` products per repetition.
pub fn bench_matvec(rows: usize, cols: usize, rank: usize, iters: usize, repetitions: usize, warmup: usize, seed: u64) -> Result<MatvecBench> {
    let u = prng_matrix::<f32>(rows, rank, seed, 1.0)?;
    let v = prng_matrix::<f32>(rank, cols, seed.wrapping_add(1), 1.0)?;
    let fact = WeightSlot::factorized(vec![FactorizedMatrix::new(u, v)?])?;
    let dense = WeightSlot::Dense(prng_matrix::<f32>(rows, cols, seed.wrapping_add(2), 1.0)?);
    let x = prng_matrix::<f32>(1, cols, seed.wrapping_add(3), 1.0)?.into_vec();
    let iters = iters.max(1);
    let mut y = vec![0.0f32; rows];
    let mut run = |slot: &WeightSlot<f32>| {
        time_reps(repetitions, warmup, iters, || {
            for _ in 0..iters {
                slot.apply_vec(black_box(&x), &mut y);
                black_box(&y);
            }
            Ok(())
        })
    };
    let dense_t = run(&dense)?;
    let fact_t = run(&fact)?;
    Ok(MatvecBench {
        rows,
        cols,
        rank,
        speedup: fact_t.speedup_over(&dense_t),
        dense: dense_t,
        factorized: fact_t,
        flop_ratio: (rows * cols) as f64 / (rank * (rows + cols)) as f64,
    })
}

/// One-line description of the host for timing reports.
pub fn machine_info() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "os={} arch={} cpus={cpus} cpu={cpu:?} threads=1",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
