//! Perplexity, compression efficiency, inference timing and norm sweeps.

mod bench;
mod eval;
mod sweep;

pub use bench::{bench_inference, bench_matvec, machine_info, MatvecBench, Timing};
pub use eval::{efficiency, perplexity, relative_change, EvalResult};
pub use sweep::{
    feasible_ranks, norm_sweep, write_csv, Gate, Granularity, Measured, ReportRow, SweepEval, SweepOptions, CSV_HEADER,
    CSV_HEADER_REDUCED, DEFAULT_RANKS,
};

#[cfg(test)]
mod tests;
