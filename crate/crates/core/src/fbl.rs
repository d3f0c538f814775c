//! Finite-blocklength rate kernel.
//!
//! Rates follow the normal approximation
//! `θ · [log2(1 + γ) − sqrt(V(γ) / l) · Q⁻¹(ε) · log2 e]`, with the channel
//! dispersion `V(γ) = 1 − (1 + γ)⁻²`.

use core::f64::consts::{FRAC_1_SQRT_2, LN_2, LOG2_E};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FblError {
    #[error("error probability {0} is outside the open interval (0, 1)")]
    Epsilon(f64),
    #[error("SINR {0} is negative or not finite")]
    Sinr(f64),
    #[error("blocklength must be at least one channel use")]
    Blocklength,
    #[error("time fraction {0} is outside (0, 1]")]
    TimeFraction(f64),
}

/// Whether the dispersion penalty is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlocklengthMode {
    Finite,
    Infinite,
}

impl BlocklengthMode {
    pub fn tag(self) -> &'static str {
        match self {
            BlocklengthMode::Finite => "fin",
            BlocklengthMode::Infinite => "inf",
        }
    }
}

/// Standard Gaussian tail probability `Q(x) = P[N(0,1) > x]`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of [`q_func`], by bisection on the monotone tail.
///
/// Bisection runs until the bracket cannot be split any further in binary64,
/// so the result is the correctly bracketed root to within one ulp.
pub fn q_inv(epsilon: f64) -> Result<f64, FblError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(FblError::Epsilon(epsilon));
    }
    if epsilon == 0.5 {
        return Ok(0.0);
    }
    if epsilon > 0.5 {
        return q_inv(1.0 - epsilon).map(|z| -z);
    }
    // Q(39) underflows below the smallest subnormal.
    let (mut lo, mut hi) = (0.0_f64, 39.0_f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if q_func(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever endpoint reproduces epsilon best.
    let err = |x: f64| (q_func(x) - epsilon).abs();
    Ok(if err(lo) <= err(hi) { lo } else { hi })
}

/// Channel dispersion `V(γ) = 1 − (1 + γ)⁻²`, evaluated as `γ(2 + γ)/(1 + γ)²`
/// to keep relative accuracy near zero.
pub fn dispersion(gamma: f64) -> Result<f64, FblError> {
    if !(gamma >= 0.0) {
        return Err(FblError::Sinr(gamma));
    }
    if gamma.is_infinite() {
        return Ok(1.0);
    }
    let one_plus = 1.0 + gamma;
    Ok(gamma * (2.0 + gamma) / (one_plus * one_plus))
}

/// The `B = Q⁻¹(ε) · log2 e` constant multiplying every dispersion penalty.
pub fn penalty_constant(epsilon: f64) -> Result<f64, FblError> {
    Ok(q_inv(epsilon)? * LOG2_E)
}

/// `log2(1 + γ)` computed through `log1p`.
pub fn shannon(gamma: f64) -> f64 {
    libm::log1p(gamma) / LN_2
}

/// Parameters of one finite-blocklength rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblParams {
    pub epsilon: f64,
    pub blocklength: u32,
    pub time_fraction: f64,
    pub mode: BlocklengthMode,
}

impl FblParams {
    pub fn new(
        epsilon: f64,
        blocklength: u32,
        time_fraction: f64,
        mode: BlocklengthMode,
    ) -> Result<Self, FblError> {
        let params = Self { epsilon, blocklength, time_fraction, mode };
        params.check()?;
        Ok(params)
    }

    pub fn finite(epsilon: f64, blocklength: u32) -> Result<Self, FblError> {
        Self::new(epsilon, blocklength, 1.0, BlocklengthMode::Finite)
    }

    fn check(&self) -> Result<(), FblError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(FblError::Epsilon(self.epsilon));
        }
        if self.blocklength == 0 {
            return Err(FblError::Blocklength);
        }
        if !(self.time_fraction > 0.0 && self.time_fraction <= 1.0) {
            return Err(FblError::TimeFraction(self.time_fraction));
        }
        Ok(())
    }

    /// `B / sqrt(l)`; zero in infinite-blocklength mode.
    pub fn penalty_scale(&self) -> Result<f64, FblError> {
        self.check()?;
        Ok(match self.mode {
            BlocklengthMode::Infinite => 0.0,
            BlocklengthMode::Finite => {
                penalty_constant(self.epsilon)? / libm::sqrt(f64::from(self.blocklength))
            }
        })
    }

    /// Pre-computes the penalty scale for repeated evaluations.
    pub fn kernel(&self) -> Result<RateKernel, FblError> {
        Ok(RateKernel { time_fraction: self.time_fraction, scale: self.penalty_scale()? })
    }
}

/// A rate evaluator with the `Q⁻¹` constant already resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateKernel {
    pub time_fraction: f64,
    /// `B / sqrt(l)`.
    pub scale: f64,
}

impl RateKernel {
    /// Dispersion penalty in bits per channel use, before the time fraction.
    pub fn penalty(&self, gamma: f64) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let v = dispersion(gamma.max(0.0)).unwrap_or(0.0);
        self.scale * libm::sqrt(v)
    }

    /// Approximate achievable rate; may be negative for small SINR.
    pub fn rate(&self, gamma: f64) -> f64 {
        let gamma = gamma.max(0.0);
        self.time_fraction * (shannon(gamma) - self.penalty(gamma))
    }
}

/// Approximate achievable rate in bits per channel use.
pub fn fbl_rate(gamma: f64, params: &FblParams) -> Result<f64, FblError> {
    if !(gamma >= 0.0) {
        return Err(FblError::Sinr(gamma));
    }
    Ok(params.kernel()?.rate(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_inv_reference_points() {
        // Frozen from a 40-digit evaluation of sqrt(2)·erfinv(1 − 2ε).
        let cases = [
            (1e-6, 4.753_424_308_822_899),
            (5e-6, 4.417_173_413_469_022),
            (1e-5, 4.264_890_793_922_825),
            (1e-3, 3.090_232_306_167_813_5),
            (0.1, 1.281_551_565_544_600_5),
        ];
        for (eps, z) in cases {
            let got = q_inv(eps).unwrap();
            assert!((got - z).abs() < 1e-9, "eps={eps}: {got} vs {z}");
        }
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        assert!((q_inv(0.9).unwrap() + 1.281_551_565_544_600_5).abs() < 1e-9);
    }

    #[test]
    fn q_inv_rejects_out_of_range() {
        for eps in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(q_inv(eps).is_err());
        }
    }

    #[test]
    fn dispersion_points() {
        assert_eq!(dispersion(0.0).unwrap(), 0.0);
        assert!((dispersion(10.0).unwrap() - (1.0 - 1.0 / 121.0)).abs() < 1e-15);
        assert!(dispersion(1e7).unwrap() < 1.0);
        assert_eq!(dispersion(f64::INFINITY).unwrap(), 1.0);
        assert!(dispersion(-1e-3).is_err());
    }

    #[test]
    fn rate_points() {
        let p = FblParams::finite(1e-5, 200).unwrap();
        // 40-digit reference: 3.026154859543092...
        assert!((fbl_rate(10.0, &p).unwrap() - 3.026_154_859_543_092).abs() < 1e-9);
        assert_eq!(fbl_rate(0.0, &p).unwrap(), 0.0);
        let inf = FblParams::new(1e-5, 200, 1.0, BlocklengthMode::Infinite).unwrap();
        assert!((fbl_rate(1.0, &inf).unwrap() - 1.0).abs() < 1e-15);
        let half = FblParams::new(1e-5, 200, 0.5, BlocklengthMode::Finite).unwrap();
        assert!((fbl_rate(10.0, &half).unwrap() - 0.5 * 3.026_154_859_543_092).abs() < 1e-9);
    }

    #[test]
    fn invalid_params() {
        assert_eq!(FblParams::finite(1e-5, 0), Err(FblError::Blocklength));
        assert!(FblParams::new(1e-5, 10, 0.0, BlocklengthMode::Finite).is_err());
        assert!(FblParams::new(1e-5, 10, 1.1, BlocklengthMode::Finite).is_err());
        let p = FblParams::finite(1e-5, 10).unwrap();
        assert!(fbl_rate(-1.0, &p).is_err());
    }

    #[test]
    fn small_sinr_rate_is_negative() {
        let p = FblParams::finite(1e-5, 200).unwrap();
        assert!(fbl_rate(0.01, &p).unwrap() < 0.0);
    }
}
