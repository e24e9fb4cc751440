use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::{Matrix, Real};
use crate::{Error, Result};

/// Deterministic generator shared by fixtures, weight init, dropout and
/// data shuffling.
pub type Prng = SplitMix64;

pub fn prng(seed: u64) -> Prng {
    SplitMix64::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one 64-bit output.
#[inline]
pub fn unit_f64(rng: &mut Prng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The first `N` outputs of the stream seeded with `seed`, used to give
/// independent consumers of one run seed their own streams.
pub fn sub_seeds<const N: usize>(seed: u64) -> [u64; N] {
    let mut rng = prng(seed);
    std::array::from_fn(|_| rng.next_u64())
}

/// Row-major matrix with entries `scale * (2u - 1)`, `u` drawn by
/// [`unit_f64`] from a SplitMix64 stream seeded with `seed`.
pub fn prng_matrix<T: Real>(rows: usize, cols: usize, seed: u64, scale: f64) -> Result<Matrix<T>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidShape(format!("{rows}x{cols} has a zero dimension")));
    }
    let mut rng = prng(seed);
    let data = (0..rows * cols)
        .map(|_| T::from_f64(scale * (2.0 * unit_f64(&mut rng) - 1.0) + 0.0))
        .collect();
    Matrix::new(rows, cols, data)
}
