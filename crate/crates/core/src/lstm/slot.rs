//! A recurrence weight matrix in one of its three storage forms.

use serde::{Deserialize, Serialize};

use crate::factor::{FactorizedMatrix, PrunedMatrix};
use crate::tensor::{gemm, matvec_acc, Matrix, Real, Trans};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Dense,
    Factorized,
    Pruned,
}

impl SlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotKind::Dense => "dense",
            SlotKind::Factorized => "factorized",
            SlotKind::Pruned => "pruned",
        }
    }
}

/// Effective shape is the same in every variant. A factorized slot holds one
/// factor pair per row block: a single block for a stacked factorization, or
/// one per gate.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSlot<T = f32> {
    Dense(Matrix<T>),
    Factorized(Vec<FactorizedMatrix<T>>),
    Pruned(PrunedMatrix<T>),
}

impl<T: Real> WeightSlot<T> {
    pub fn factorized(blocks: Vec<FactorizedMatrix<T>>) -> Result<Self> {
        let cols = blocks
            .first()
            .ok_or_else(|| Error::Shape("factorized slot needs at least one block".into()))?
            .shape()
            .1;
        if blocks.iter().any(|b| b.shape().1 != cols) {
            return Err(Error::Shape("factor blocks disagree on column count".into()));
        }
        Ok(Self::Factorized(blocks))
    }

    pub fn kind(&self) -> SlotKind {
        match self {
            Self::Dense(_) => SlotKind::Dense,
            Self::Factorized(_) => SlotKind::Factorized,
            Self::Pruned(_) => SlotKind::Pruned,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Dense(w) => w.shape(),
            Self::Factorized(blocks) => (blocks.iter().map(|b| b.shape().0).sum(), blocks[0].shape().1),
            Self::Pruned(p) => p.shape(),
        }
    }

    /// Trainable parameters: `mn` dense, `sum r(m_b + n)` factorized, surviving
    /// weights when pruned (mask bits are not counted).
    pub fn param_count(&self) -> usize {
        match self {
            Self::Dense(w) => w.len(),
            Self::Factorized(blocks) => blocks.iter().map(FactorizedMatrix::param_count).sum(),
            Self::Pruned(p) => p.kept(),
        }
    }

    /// Multiply-adds for one matrix-vector product. Pruned slots run the dense
    /// kernel over explicit zeros.
    pub fn flops_per_vector(&self) -> usize {
        match self {
            Self::Dense(w) => w.len(),
            Self::Pruned(p) => p.weights().len(),
            Self::Factorized(_) => self.param_count(),
        }
    }

    /// The matrix this slot stands for (`u * v` blocks are multiplied out).
    pub fn effective(&self) -> Matrix<T> {
        match self {
            Self::Dense(w) => w.clone(),
            Self::Factorized(blocks) => {
                Matrix::vstack(&blocks.iter().map(FactorizedMatrix::reconstruct).collect::<Vec<_>>())
            }
            Self::Pruned(p) => p.weights().clone(),
        }
    }

    /// `y = W x`. Factorized slots compute `u (v x)` without forming `u v`.
    pub fn apply_vec(&self, x: &[T], y: &mut [T]) {
        let (m, n) = self.shape();
        assert_eq!(x.len(), n, "input length");
        assert_eq!(y.len(), m, "output length");
        y.iter_mut().for_each(|v| *v = T::zero());
        match self {
            Self::Dense(w) => matvec_acc(w.as_slice(), m, n, x, y),
            Self::Pruned(p) => matvec_acc(p.weights().as_slice(), m, n, x, y),
            Self::Factorized(blocks) => {
                let mut off = 0;
                for b in blocks {
                    let (mb, r) = (b.u().rows(), b.rank());
                    let mut z = vec![T::zero(); r];
                    matvec_acc(b.v().as_slice(), r, n, x, &mut z);
                    matvec_acc(b.u().as_slice(), mb, r, &z, &mut y[off..off + mb]);
                    off += mb;
                }
            }
        }
    }

    /// `Y += X Wᵀ` for `rows` input rows; `Y` has row stride `ldy`.
    pub(crate) fn forward_acc(&self, x: &[T], rows: usize, y: &mut [T], ldy: usize, scratch: &mut Vec<T>) {
        let (m, n) = self.shape();
        match self {
            Self::Dense(w) => dense_forward(w, x, rows, y, ldy),
            Self::Pruned(p) => dense_forward(p.weights(), x, rows, y, ldy),
            Self::Factorized(blocks) => {
                let mut off = 0;
                for b in blocks {
                    let (mb, r) = (b.u().rows(), b.rank());
                    scratch.resize(rows * r, T::zero());
                    let z = &mut scratch[..rows * r];
                    gemm(Trans::No, Trans::Yes, rows, r, n, T::one(), x, n, b.v().as_slice(), n, T::zero(), z, r);
                    gemm(Trans::No, Trans::Yes, rows, mb, r, T::one(), z, r, b.u().as_slice(), r, T::one(), &mut y[off..], ldy);
                    off += mb;
                }
                debug_assert_eq!(off, m);
            }
        }
    }

    /// `dX += dY W`.
    pub(crate) fn backward_input(&self, dy: &[T], rows: usize, dx: &mut [T], scratch: &mut Vec<T>) {
        let (m, n) = self.shape();
        match self {
            Self::Dense(w) => gemm(Trans::No, Trans::No, rows, n, m, T::one(), dy, m, w.as_slice(), n, T::one(), dx, n),
            Self::Pruned(p) => {
                gemm(Trans::No, Trans::No, rows, n, m, T::one(), dy, m, p.weights().as_slice(), n, T::one(), dx, n)
            }
            Self::Factorized(blocks) => {
                let mut off = 0;
                for b in blocks {
                    let (mb, r) = (b.u().rows(), b.rank());
                    scratch.resize(rows * r, T::zero());
                    let dz = &mut scratch[..rows * r];
                    gemm(Trans::No, Trans::No, rows, r, mb, T::one(), &dy[off..], m, b.u().as_slice(), r, T::zero(), dz, r);
                    gemm(Trans::No, Trans::No, rows, n, r, T::one(), dz, r, b.v().as_slice(), n, T::one(), dx, n);
                    off += mb;
                }
            }
        }
    }

    /// Adds parameter gradients given the slot input `X` and output gradient
    /// `dY`. `grads` holds one buffer per trainable tensor in
    /// [`WeightSlot::tensors`] order.
    pub(crate) fn accumulate_grad(&self, x: &[T], dy: &[T], rows: usize, grads: &mut [Vec<T>], scratch: &mut Vec<T>) {
        let (m, n) = self.shape();
        match self {
            Self::Dense(_) => {
                gemm(Trans::Yes, Trans::No, m, n, rows, T::one(), dy, m, x, n, T::one(), &mut grads[0], n);
            }
            Self::Pruned(p) => {
                gemm(Trans::Yes, Trans::No, m, n, rows, T::one(), dy, m, x, n, T::one(), &mut grads[0], n);
                for (g, &keep) in grads[0].iter_mut().zip(p.mask()) {
                    if !keep {
                        *g = T::zero();
                    }
                }
            }
            Self::Factorized(blocks) => {
                let mut off = 0;
                for (bi, b) in blocks.iter().enumerate() {
                    let (mb, r) = (b.u().rows(), b.rank());
                    scratch.resize(2 * rows * r, T::zero());
                    let (z, dz) = scratch.split_at_mut(rows * r);
                    let dz = &mut dz[..rows * r];
                    // z = X vᵀ, du += dY_bᵀ z, dz = dY_b u, dv += dzᵀ X
                    gemm(Trans::No, Trans::Yes, rows, r, n, T::one(), x, n, b.v().as_slice(), n, T::zero(), z, r);
                    gemm(Trans::Yes, Trans::No, mb, r, rows, T::one(), &dy[off..], m, z, r, T::one(), &mut grads[2 * bi], r);
                    gemm(Trans::No, Trans::No, rows, r, mb, T::one(), &dy[off..], m, b.u().as_slice(), r, T::zero(), dz, r);
                    gemm(Trans::Yes, Trans::No, r, n, rows, T::one(), dz, r, x, n, T::one(), &mut grads[2 * bi + 1], n);
                    off += mb;
                }
            }
        }
    }

    /// Trainable tensors: `[w]` for dense and pruned, `[u0, v0, u1, v1, ..]`
    /// for factorized.
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        match self {
            Self::Dense(w) => vec![w],
            Self::Pruned(p) => vec![p.weights()],
            Self::Factorized(blocks) => blocks.iter().flat_map(|b| [b.u(), b.v()]).collect(),
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        match self {
            Self::Dense(w) => vec![w],
            Self::Pruned(p) => vec![p.weights_mut()],
            Self::Factorized(blocks) => blocks
                .iter_mut()
                .flat_map(|b| {
                    let (u, v) = b.parts_mut();
                    [u, v]
                })
                .collect(),
        }
    }

    pub fn mask(&self) -> Option<&[bool]> {
        match self {
            Self::Pruned(p) => Some(p.mask()),
            _ => None,
        }
    }

    pub fn cast<U: Real>(&self) -> WeightSlot<U> {
        match self {
            Self::Dense(w) => WeightSlot::Dense(w.cast()),
            Self::Factorized(blocks) => WeightSlot::Factorized(
                blocks
                    .iter()
                    .map(|b| FactorizedMatrix::new(b.u().cast(), b.v().cast()).expect("same shapes"))
                    .collect(),
            ),
            Self::Pruned(p) => {
                WeightSlot::Pruned(PrunedMatrix::new(p.weights().cast(), p.mask().to_vec()).expect("same shapes"))
            }
        }
    }
}

fn dense_forward<T: Real>(w: &Matrix<T>, x: &[T], rows: usize, y: &mut [T], ldy: usize) {
    let (m, n) = w.shape();
    gemm(Trans::No, Trans::Yes, rows, m, n, T::one(), x, n, w.as_slice(), n, T::one(), y, ldy);
}
