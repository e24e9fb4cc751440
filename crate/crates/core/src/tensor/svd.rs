//! Full singular value decomposition by one-sided (Hestenes) Jacobi
//! rotations, computed in `f64`.

use super::{Matrix, Real};
use crate::Result;

const ROTATION_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// `w = u * diag(s) * vt` with `k = min(m, n)` singular triplets.
#[derive(Clone, Debug)]
pub struct Svd<T = f32> {
    /// `m x k`, orthonormal columns.
    pub u: Matrix<T>,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// `k x n`, orthonormal rows.
    pub vt: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn rank_k(&self) -> usize {
        self.s.len()
    }

    /// `u * diag(s) * vt` restricted to the leading `r` triplets.
    pub fn reconstruct(&self, r: usize) -> Matrix<T> {
        let (m, n) = (self.u.rows(), self.vt.cols());
        let r = r.min(self.s.len());
        Matrix::from_fn(m, n, |i, j| {
            let mut acc = 0.0;
            for t in 0..r {
                acc += self.u.get(i, t).as_f64() * self.s[t] * self.vt.get(t, j).as_f64();
            }
            T::from_f64(acc)
        })
    }
}

/// Signs are fixed so the largest-magnitude entry of every column of `u` is
/// positive (first such entry on ties).
pub fn svd_full<T: Real>(w: &Matrix<T>) -> Result<Svd<T>> {
    w.ensure_finite()?;
    let (m, n) = w.shape();
    let transpose = m < n;
    let (rows, cols) = if transpose { (n, m) } else { (m, n) };

    // Columns of the working matrix, each contiguous.
    let mut a = vec![0.0f64; rows * cols];
    for i in 0..m {
        for j in 0..n {
            let v = w.get(i, j).as_f64();
            if transpose {
                a[i * rows + j] = v;
            } else {
                a[j * rows + i] = v;
            }
        }
    }
    let mut v = vec![0.0f64; cols * cols];
    for j in 0..cols {
        v[j * cols + j] = 1.0;
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let ap = &a[p * rows..(p + 1) * rows];
                    let aq = &a[q * rows..(q + 1) * rows];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in ap.iter().zip(aq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, rows, p, q, c, s);
                rotate(&mut v, cols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = (0..cols)
        .map(|j| a[j * rows..(j + 1) * rows].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));

    let k = cols;
    let s: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let null_tol = s.first().copied().unwrap_or(0.0) * rows as f64 * f64::EPSILON * 16.0;

    // Left vectors of the working matrix (rows x k, column-contiguous).
    let mut left = vec![0.0f64; rows * k];
    let mut null_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        if s[dst] > null_tol && s[dst] > 0.0 {
            for i in 0..rows {
                left[dst * rows + i] = a[src * rows + i] / s[dst];
            }
        } else {
            null_cols.push(dst);
        }
    }
    complete_orthonormal(&mut left, rows, k, &null_cols);

    let mut right = vec![0.0f64; cols * k];
    for (dst, &src) in order.iter().enumerate() {
        right[dst * cols..(dst + 1) * cols].copy_from_slice(&v[src * cols..(src + 1) * cols]);
    }

    // Original orientation: u is m x k, vt is k x n, both column-contiguous here.
    let (u_cols, vt_rows) = if transpose { (right, left) } else { (left, right) };
    let mut u = Matrix::<f64>::zeros(m, k);
    let mut vt = Matrix::<f64>::zeros(k, n);
    for t in 0..k {
        let col = &u_cols[t * m..(t + 1) * m];
        let mut best = 0;
        for i in 1..m {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            u.set(i, t, sign * col[i]);
        }
        for j in 0..n {
            vt.set(t, j, sign * vt_rows[t * n + j]);
        }
    }

    Ok(Svd {
        u: u.cast(),
        s,
        vt: vt.cast(),
    })
}

/// Singular values only, non-increasing.
pub fn singular_values<T: Real>(w: &Matrix<T>) -> Result<Vec<f64>> {
    Ok(svd_full(w)?.s)
}

fn rotate(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let xp = &mut head[p * len..(p + 1) * len];
    let xq = &mut tail[..len];
    for (x, y) in xp.iter_mut().zip(xq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Replaces the listed columns with unit vectors orthogonal to every other
/// column. Candidates are the coordinate axes least covered so far.
fn complete_orthonormal(q: &mut [f64], rows: usize, k: usize, null_cols: &[usize]) {
    if null_cols.is_empty() {
        return;
    }
    let mut filled: Vec<bool> = vec![true; k];
    for &j in null_cols {
        filled[j] = false;
    }
    // coverage[i] = sum of squares of row i over filled columns
    let mut coverage = vec![0.0f64; rows];
    for j in (0..k).filter(|&j| filled[j]) {
        for i in 0..rows {
            coverage[i] += q[j * rows + i].powi(2);
        }
    }
    for &j in null_cols {
        let axis = (0..rows)
            .min_by(|&x, &y| coverage[x].total_cmp(&coverage[y]))
            .expect("rows > 0");
        let mut cand = vec![0.0f64; rows];
        cand[axis] = 1.0;
        for _ in 0..2 {
            for other in (0..k).filter(|&o| filled[o]) {
                let col = &q[other * rows..(other + 1) * rows];
                let proj: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                for (c, a) in cand.iter_mut().zip(col) {
                    *c -= proj * a;
                }
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, c) in cand.iter().enumerate() {
            let val = c / norm;
            q[j * rows + i] = val;
            coverage[i] += val * val;
        }
        filled[j] = true;
    }
}
