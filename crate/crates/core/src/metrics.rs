//! Derived per-solution and per-experiment metrics.

use thiserror::Error;

use crate::model::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MetricError {
    #[error("solution transmits no power")]
    ZeroPower,
    #[error("baseline mean is zero")]
    ZeroBaseline,
}

/// `‖p_c‖² / Σ_j ‖p_j‖²`.
pub fn common_power_fraction(solution: &Solution) -> Result<f64, MetricError> {
    let total = solution.total_power();
    if total <= 0.0 {
        return Err(MetricError::ZeroPower);
    }
    Ok((solution.common_power() / total).clamp(0.0, 1.0))
}

/// `(a − b) / b`.
pub fn relative_gain(mean_a: f64, mean_b: f64) -> Result<f64, MetricError> {
    if mean_b == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok((mean_a - mean_b) / mean_b)
}
