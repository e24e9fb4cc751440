//! Dense matrices, products, SVD and norm diagnostics.

mod gemm;
mod matrix;
mod norms;
mod prng;
mod real;
mod svd;

pub use gemm::{dot, flops, gemm, matvec_acc, Trans};
pub use matrix::Matrix;
pub use norms::{norm_stats, spectral_norm, NormStats};
pub(crate) use norms::abs_moments;
pub use prng::{prng, prng_matrix, sub_seeds, unit_f64, Prng};
pub use real::Real;
pub use svd::{singular_values, svd_full, Svd};
