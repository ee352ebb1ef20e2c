//! Agreement metrics between predicted and measured series.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics<T> {
    pub r2: T,
    pub mbe: T,
    pub rmse: T,
}

/// Coefficient of determination, mean bias error and root mean squared error.
pub fn error_metrics<T: Real>(predicted: &[T], measured: &[T]) -> Result<ErrorMetrics<T>> {
    if predicted.len() != measured.len() || predicted.len() < 2 {
        return Err(Error::LengthMismatch { left: predicted.len(), right: measured.len() });
    }
    let n = T::from_usize_lossy(measured.len());
    let mean = measured.iter().copied().fold(T::zero(), |a, x| a + x) / n;
    let mut bias = T::zero();
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for (&p, &m) in predicted.iter().zip(measured) {
        let d = p - m;
        bias = bias + d;
        ss_res = ss_res + d * d;
        ss_tot = ss_tot + (m - mean) * (m - mean);
    }
    if ss_tot == T::zero() {
        return Err(Error::DegenerateVariance);
    }
    Ok(ErrorMetrics { r2: T::one() - ss_res / ss_tot, mbe: bias / n, rmse: (ss_res / n).sqrt() })
}
