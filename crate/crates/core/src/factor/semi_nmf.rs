//! Semi-NMF: `w ~= u * v` with `v >= 0` and `u`, `w` of any sign.
//!
//! Alternates an exact (ridge-stabilised) least-squares solve for `u` with
//! the multiplicative update of Ding, Li & Jordan for `v`:
//!
//! ```text
//! A = uᵀw, B = uᵀu
//! v <- v ⊙ sqrt((A⁺ + B⁻ v) / (A⁻ + B⁺ v))
//! ```
//!
//! where `X⁺ = (|X| + X) / 2` and `X⁻ = (|X| - X) / 2`. Both half-steps do not
//! increase `‖w - uv‖²`.

use serde::{Deserialize, Serialize};

use super::linalg::solve_right_spd;
use super::{check_rank, FactorizedMatrix};
use crate::tensor::{gemm, svd_full, Matrix, Real, Trans};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiNmfOptions {
    pub max_iters: usize,
    /// Stop once an alternation lowers the objective by less than this fraction.
    pub rel_tol: f64,
    /// Initialization currently derives from the SVD and is deterministic; the
    /// seed is kept so runs record a complete configuration.
    pub seed: u64,
    /// Floor for entries of `v` and ridge term for the `u` solve.
    pub eps: f64,
}

impl Default for SemiNmfOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-4,
            seed: 0,
            eps: 1e-8,
        }
    }
}

impl SemiNmfOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.rel_tol > 0.0) || !(self.eps > 0.0) {
            return Err(Error::InvalidShape(format!(
                "semi-NMF options need max_iters >= 1, rel_tol > 0, eps > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SemiNmfOutput<T = f32> {
    pub factors: FactorizedMatrix<T>,
    /// `‖w - uv‖²_F` after every alternation.
    pub objective_trace: Vec<f64>,
    /// Whether the relative-decrease criterion fired before `max_iters`.
    pub converged: bool,
}

pub fn semi_nmf<T: Real>(w: &Matrix<T>, r: usize, opts: &SemiNmfOptions) -> Result<SemiNmfOutput<T>> {
    let (m, n) = w.shape();
    check_rank(m, n, r)?;
    opts.validate()?;
    let wd = w.cast::<f64>();
    let w64 = wd.as_slice();
    let eps = opts.eps;

    let svd = svd_full(&wd)?;
    let mut v: Vec<f64> = (0..r * n)
        .map(|idx| svd.vt.get(idx / n, idx % n).abs() + eps)
        .collect();
    let mut u = solve_u(w64, m, n, &v, r, eps);
    let mut prev = objective(w64, m, n, &u, &v, r);

    let mut best = (u.clone(), v.clone(), prev);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut a = vec![0.0f64; r * n];
    let mut b = vec![0.0f64; r * r];
    let mut bpv = vec![0.0f64; r * n];
    let mut bnv = vec![0.0f64; r * n];

    for _ in 0..opts.max_iters {
        // A = uᵀw, B = uᵀu
        gemm(Trans::Yes, Trans::No, r, n, m, 1.0, &u, r, w64, n, 0.0, &mut a, n);
        gemm(Trans::Yes, Trans::No, r, r, m, 1.0, &u, r, &u, r, 0.0, &mut b, r);
        let b_pos: Vec<f64> = b.iter().map(|x| 0.5 * (x.abs() + x)).collect();
        let b_neg: Vec<f64> = b.iter().map(|x| 0.5 * (x.abs() - x)).collect();
        gemm(Trans::No, Trans::No, r, n, r, 1.0, &b_pos, r, &v, n, 0.0, &mut bpv, n);
        gemm(Trans::No, Trans::No, r, n, r, 1.0, &b_neg, r, &v, n, 0.0, &mut bnv, n);
        for idx in 0..r * n {
            let num = 0.5 * (a[idx].abs() + a[idx]) + bnv[idx];
            let den = 0.5 * (a[idx].abs() - a[idx]) + bpv[idx];
            if den > 0.0 {
                v[idx] = (v[idx] * (num / den).sqrt()).max(eps);
            }
        }
        u = solve_u(w64, m, n, &v, r, eps);

        let obj = objective(w64, m, n, &u, &v, r);
        trace.push(obj);
        if obj < best.2 {
            best = (u.clone(), v.clone(), obj);
        }
        let decrease = (prev - obj) / prev.max(f64::MIN_POSITIVE);
        prev = obj;
        if obj <= f64::MIN_POSITIVE || decrease < opts.rel_tol {
            converged = true;
            break;
        }
    }

    let (u, v, _) = best;
    let u = Matrix::new(m, r, u.into_iter().map(T::from_f64).collect())?;
    let v = Matrix::new(r, n, v.into_iter().map(T::from_f64).collect())?;
    Ok(SemiNmfOutput {
        factors: FactorizedMatrix::new(u, v)?,
        objective_trace: trace,
        converged,
    })
}

/// `u = w vᵀ (v vᵀ + εI)⁻¹`, growing the ridge if the Gram matrix is singular.
fn solve_u(w: &[f64], m: usize, n: usize, v: &[f64], r: usize, eps: f64) -> Vec<f64> {
    let mut rhs = vec![0.0f64; m * r];
    gemm(Trans::No, Trans::Yes, m, r, n, 1.0, w, n, v, n, 0.0, &mut rhs, r);
    let mut gram = vec![0.0f64; r * r];
    gemm(Trans::No, Trans::Yes, r, r, n, 1.0, v, n, v, n, 0.0, &mut gram, r);
    let mut ridge = eps;
    loop {
        let mut g = gram.clone();
        for i in 0..r {
            g[i * r + i] += ridge;
        }
        if let Some(u) = solve_right_spd(&g, r, &rhs, m) {
            return u;
        }
        ridge *= 10.0;
    }
}

fn objective(w: &[f64], m: usize, n: usize, u: &[f64], v: &[f64], r: usize) -> f64 {
    let mut uv = vec![0.0f64; m * n];
    gemm(Trans::No, Trans::No, m, n, r, 1.0, u, r, v, n, 0.0, &mut uv, n);
    w.iter().zip(&uv).map(|(a, b)| (a - b).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::truncated_svd;
    use crate::tensor::prng_matrix;

    #[test]
    fn exact_rank_one_with_nonnegative_right_factor() {
        for rows in [[[1.0, 2.0], [2.0, 4.0]], [[-2.0, -4.0], [1.0, 2.0]]] {
            let w = Matrix::<f32>::from_rows(&[&rows[0], &rows[1]]);
            let out = semi_nmf(&w, 1, &SemiNmfOptions::default()).unwrap();
            assert!(out.factors.v().as_slice().iter().all(|&x| x >= 0.0));
            assert!(out.factors.reconstruct().frobenius_distance(&w) <= 1e-5);
        }
    }

    #[test]
    fn descent_and_feasibility_on_random() {
        let w = prng_matrix::<f32>(12, 9, 42, 1.0).unwrap();
        let out = semi_nmf(&w, 3, &SemiNmfOptions::default()).unwrap();
        let t = &out.objective_trace;
        assert!(!t.is_empty());
        assert!(t.windows(2).all(|p| p[1] <= p[0] + 1e-6));
        assert!(t[t.len() - 1] <= t[0]);
        assert!(out.factors.v().as_slice().iter().all(|&x| x >= 0.0));
        let svd_err = truncated_svd(&w, 3).unwrap().reconstruct().frobenius_distance(&w);
        let nmf_err = out.factors.reconstruct().frobenius_distance(&w);
        assert!(nmf_err >= svd_err - 1e-5);
    }

    #[test]
    fn reconstruction_matches_trace() {
        let w = prng_matrix::<f32>(10, 8, 3, 1.0).unwrap();
        let out = semi_nmf(&w, 2, &SemiNmfOptions::default()).unwrap();
        let err2 = out.factors.reconstruct().frobenius_distance(&w).powi(2);
        let last = *out.objective_trace.last().unwrap();
        assert!((err2 - last).abs() <= 1e-5 * last.max(1.0), "{err2} vs {last}");
    }

    #[test]
    fn invalid_inputs() {
        let w = Matrix::<f32>::identity(2);
        assert!(matches!(semi_nmf(&w, 3, &SemiNmfOptions::default()), Err(Error::InvalidRank { .. })));
        let bad = SemiNmfOptions {
            max_iters: 0,
            ..Default::default()
        };
        assert!(semi_nmf(&w, 1, &bad).is_err());
    }

    #[test]
    fn single_iteration_budget_returns_best_so_far() {
        let w = prng_matrix::<f32>(6, 6, 1, 1.0).unwrap();
        let opts = SemiNmfOptions {
            max_iters: 1,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let out = semi_nmf(&w, 2, &opts).unwrap();
        assert_eq!(out.objective_trace.len(), 1);
        assert!(!out.converged);
    }
}
