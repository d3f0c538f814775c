//! First-order restrictions used by the SCA subproblems.
//!
//! Both are tight at the expansion point and conservative elsewhere:
//! `sqrt(ν(ρ))` is concave so its tangent lies above it, and the
//! quadratic-over-linear `|hᴴp|²/ρ` is jointly convex so its tangent plane
//! lies below it.

use alloc::vec::Vec;

use num_complex::Complex64;
use thiserror::Error;

use crate::fbl::dispersion;
use crate::linalg::inner;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TaylorError {
    #[error("expansion point {0} must be positive and finite")]
    ExpansionPoint(f64),
}

/// Affine bound `intercept + slope · ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub intercept: f64,
    pub slope: f64,
}

impl Tangent {
    pub fn eval(&self, rho: f64) -> f64 {
        self.intercept + self.slope * rho
    }
}

/// Tangent of the dispersion penalty `scale · sqrt(ν(ρ))` at `rho_n`, where
/// `scale = B / sqrt(l)` and `ν(ρ) = 1 − (1 + ρ)⁻²`.
///
/// Slope is `scale · ν(ρ_n)^(−1/2) · (1 + ρ_n)⁻³`.
pub fn taylor_sqrt_dispersion(rho_n: f64, scale: f64) -> Result<Tangent, TaylorError> {
    if !(rho_n > 0.0 && rho_n.is_finite()) {
        return Err(TaylorError::ExpansionPoint(rho_n));
    }
    if scale == 0.0 {
        return Ok(Tangent { intercept: 0.0, slope: 0.0 });
    }
    let root = libm::sqrt(dispersion(rho_n).map_err(|_| TaylorError::ExpansionPoint(rho_n))?);
    let inv = 1.0 / (1.0 + rho_n);
    let slope = scale * inv * inv * inv / root;
    Ok(Tangent { intercept: scale * root - slope * rho_n, slope })
}

/// Exact penalty `scale · sqrt(ν(ρ))`, the function the tangent majorizes.
pub fn sqrt_dispersion_penalty(rho: f64, scale: f64) -> f64 {
    scale * libm::sqrt(dispersion(rho.max(0.0)).unwrap_or(0.0))
}

/// Affine minorant of `|hᴴp|² / ρ` around `(p_n, ρ_n)`:
/// `2ℜ{p_nᴴ h hᴴ p}/ρ_n − |hᴴp_n|² ρ / ρ_n²`.
///
/// Stored as `ℜ{directionᴴ p} + rho_coeff · ρ + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QolMinorant {
    /// `2 (hᴴp_n)/ρ_n · h`.
    pub direction: Vec<Complex64>,
    /// `−|hᴴp_n|² / ρ_n²`.
    pub rho_coeff: f64,
    /// Always zero for this expansion; kept so callers can treat the bound
    /// as a generic affine form.
    pub constant: f64,
}

impl QolMinorant {
    pub fn eval(&self, p: &[Complex64], rho: f64) -> f64 {
        inner(&self.direction, p).re + self.rho_coeff * rho + self.constant
    }
}

pub fn linearize_qol(
    h: &[Complex64],
    p_n: &[Complex64],
    rho_n: f64,
) -> Result<QolMinorant, TaylorError> {
    if !(rho_n > 0.0 && rho_n.is_finite()) {
        return Err(TaylorError::ExpansionPoint(rho_n));
    }
    let g_n = inner(h, p_n);
    let weight = g_n * (2.0 / rho_n);
    Ok(QolMinorant {
        direction: h.iter().map(|z| z * weight).collect(),
        rho_coeff: -g_n.norm_sqr() / (rho_n * rho_n),
        constant: 0.0,
    })
}
