use super::{check_rank, FactorizedMatrix};
use crate::tensor::{svd_full, Matrix, Real};
use crate::Result;

/// Best rank-`r` approximation. Singular values are folded into the left
/// factor: `u = U_r diag(S_r)`, `v = Vt_r`.
pub fn truncated_svd<T: Real>(w: &Matrix<T>, r: usize) -> Result<FactorizedMatrix<T>> {
    let (m, n) = w.shape();
    check_rank(m, n, r)?;
    let svd = svd_full(&w.cast::<f64>())?;
    let u = Matrix::<T>::from_fn(m, r, |i, t| T::from_f64(svd.u.get(i, t) * svd.s[t]));
    let v = Matrix::<T>::from_fn(r, n, |t, j| T::from_f64(svd.vt.get(t, j)));
    FactorizedMatrix::new(u, v)
}
