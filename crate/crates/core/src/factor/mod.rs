//! Low-rank factorizations and magnitude pruning of weight matrices.

mod linalg;
mod prune;
mod semi_nmf;
mod truncated;

use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Real};
use crate::{Error, Result};

pub use prune::{prune_magnitude, rank_to_keep_count, PrunedMatrix};
pub use semi_nmf::{semi_nmf, SemiNmfOptions, SemiNmfOutput};
pub use truncated::truncated_svd;

/// `w ~= u * v` with `u: m x r` and `v: r x n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizedMatrix<T = f32> {
    u: Matrix<T>,
    v: Matrix<T>,
}

impl<T: Real> FactorizedMatrix<T> {
    pub fn new(u: Matrix<T>, v: Matrix<T>) -> Result<Self> {
        if u.cols() != v.rows() {
            return Err(Error::Shape(format!(
                "factor inner dimensions differ: u is {}x{}, v is {}x{}",
                u.rows(),
                u.cols(),
                v.rows(),
                v.cols()
            )));
        }
        let rank = u.cols();
        let max = u.rows().min(v.cols());
        if rank > max {
            return Err(Error::InvalidRank {
                rank,
                max,
                rows: u.rows(),
                cols: v.cols(),
            });
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &Matrix<T> {
        &self.u
    }

    pub fn v(&self) -> &Matrix<T> {
        &self.v
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix<T>, &mut Matrix<T>) {
        (&mut self.u, &mut self.v)
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// Shape of the matrix being approximated.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.cols())
    }

    pub fn param_count(&self) -> usize {
        let (m, n) = self.shape();
        self.rank() * (m + n)
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        reconstruct(self)
    }
}

pub fn reconstruct<T: Real>(f: &FactorizedMatrix<T>) -> Matrix<T> {
    f.u.matmul(&f.v).expect("factor shapes validated at construction")
}

pub(crate) fn check_rank(rows: usize, cols: usize, rank: usize) -> Result<()> {
    let max = rows.min(cols);
    if rank == 0 || rank > max {
        return Err(Error::InvalidRank { rank, max, rows, cols });
    }
    Ok(())
}
