use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Real};
use crate::{Error, Result};

/// Dense matrix with a frozen keep-mask; masked entries are exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedMatrix<T = f32> {
    w: Matrix<T>,
    mask: Vec<bool>,
    kept: usize,
}

impl<T: Real> PrunedMatrix<T> {
    /// Zeroes `w` wherever `mask` is false.
    pub fn new(mut w: Matrix<T>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != w.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries for a {}x{} matrix",
                mask.len(),
                w.rows(),
                w.cols()
            )));
        }
        for (x, &keep) in w.as_mut_slice().iter_mut().zip(&mask) {
            if !keep {
                *x = T::zero();
            }
        }
        let kept = mask.iter().filter(|&&k| k).count();
        Ok(Self { w, mask, kept })
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.shape()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.w
    }
}

/// Number of surviving weights that matches the parameter budget of a
/// rank-`r` factorization of an `m x n` matrix, capped at `m * n`.
pub fn rank_to_keep_count(m: usize, n: usize, r: usize) -> usize {
    r.saturating_mul(m.saturating_add(n)).min(m.saturating_mul(n))
}

/// Keeps the `keep` largest-magnitude entries. Ties go to the earlier
/// row-major index.
pub fn prune_magnitude<T: Real>(w: &Matrix<T>, keep: usize) -> Result<PrunedMatrix<T>> {
    w.ensure_finite()?;
    let total = w.len();
    if keep > total {
        return Err(Error::InvalidBudget { keep, total });
    }
    let vals = w.as_slice();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| vals[b].abs().partial_cmp(&vals[a].abs()).unwrap().then(a.cmp(&b)));
    let mut mask = vec![false; total];
    for &idx in &order[..keep] {
        mask[idx] = true;
    }
    PrunedMatrix::new(w.clone(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_top_magnitudes() {
        let w = Matrix::<f32>::from_rows(&[&[0.1, -5.0], &[3.0, 0.2]]);
        let p = prune_magnitude(&w, 2).unwrap();
        assert_eq!(p.weights(), &Matrix::from_rows(&[&[0.0, -5.0], &[3.0, 0.0]]));
        assert_eq!(p.kept(), 2);
    }

    #[test]
    fn keep_all_is_identity() {
        let w = Matrix::<f32>::from_rows(&[&[0.1, -5.0], &[3.0, 0.2]]);
        let p = prune_magnitude(&w, 4).unwrap();
        assert_eq!(p.weights(), &w);
        assert!(p.mask().iter().all(|&k| k));
    }

    #[test]
    fn ties_break_row_major() {
        let w = Matrix::<f32>::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let p = prune_magnitude(&w, 2).unwrap();
        assert_eq!(p.mask(), &[true, true, false, false]);
    }

    #[test]
    fn budget_out_of_range() {
        let w = Matrix::<f32>::identity(2);
        assert!(matches!(prune_magnitude(&w, 5), Err(Error::InvalidBudget { keep: 5, total: 4 })));
        assert_eq!(prune_magnitude(&w, 0).unwrap().kept(), 0);
    }

    #[test]
    fn keep_count_alignment() {
        assert_eq!(rank_to_keep_count(100, 100, 10), 2000);
        assert_eq!(rank_to_keep_count(400, 1150, 400), 460_000);
        assert_eq!(rank_to_keep_count(7, 3, 0), 0);
    }
}
