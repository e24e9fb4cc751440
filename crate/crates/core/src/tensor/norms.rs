use serde::{Deserialize, Serialize};

use super::svd::singular_values;
use super::{Matrix, Real};
use crate::Result;

/// Sparsity and rank diagnostics of a weight matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Entrywise L1 norm.
    pub l1: f64,
    /// Population standard deviation of the absolute entries.
    pub l1_std: f64,
    /// Sum of singular values.
    pub nuclear: f64,
}

pub fn norm_stats<T: Real>(w: &Matrix<T>) -> Result<NormStats> {
    w.ensure_finite()?;
    let (l1, l1_std) = abs_moments(w.as_slice().iter().map(|v| v.as_f64()));
    let nuclear = singular_values(w)?.iter().sum();
    Ok(NormStats { l1, l1_std, nuclear })
}

/// Sum and population standard deviation of `|x|`, two-pass in `f64`.
pub(crate) fn abs_moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count();
    if count == 0 {
        return (0.0, 0.0);
    }
    let sum: f64 = values.clone().map(f64::abs).sum();
    let mean = sum / count as f64;
    let var = values.map(|v| (v.abs() - mean).powi(2)).sum::<f64>() / count as f64;
    (sum, var.sqrt())
}

pub fn spectral_norm<T: Real>(w: &Matrix<T>) -> Result<f64> {
    Ok(singular_values(w)?.first().copied().unwrap_or(0.0))
}
