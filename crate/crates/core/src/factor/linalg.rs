/// Solves `X * G = B` for `X` (`rows x r`) where `G` is symmetric positive
/// definite (`r x r`), all row-major `f64`. Returns `None` if the Cholesky
/// factorization breaks down.
pub(crate) fn solve_right_spd(g: &[f64], r: usize, b: &[f64], rows: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; r * r];
    for i in 0..r {
        for j in 0..=i {
            let mut sum = g[i * r + j];
            for k in 0..j {
                sum -= l[i * r + k] * l[j * r + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * r + i] = sum.sqrt();
            } else {
                l[i * r + j] = sum / l[j * r + j];
            }
        }
    }
    // X G = B  <=>  G X^T = B^T, solved row by row of X.
    let mut x = vec![0.0f64; rows * r];
    let mut y = vec![0.0f64; r];
    for row in 0..rows {
        let rhs = &b[row * r..(row + 1) * r];
        for i in 0..r {
            let mut sum = rhs[i];
            for k in 0..i {
                sum -= l[i * r + k] * y[k];
            }
            y[i] = sum / l[i * r + i];
        }
        let out = &mut x[row * r..(row + 1) * r];
        for i in (0..r).rev() {
            let mut sum = y[i];
            for k in i + 1..r {
                sum -= l[k * r + i] * out[k];
            }
            out[i] = sum / l[i * r + i];
        }
    }
    Some(x)
}
