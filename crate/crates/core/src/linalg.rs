//! Small dense complex helpers.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

/// `hᴴ p`.
pub fn inner(h: &[Complex64], p: &[Complex64]) -> Complex64 {
    h.iter().zip(p).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn scaled(v: &[Complex64], s: f64) -> Vec<Complex64> {
    v.iter().map(|z| z * s).collect()
}

/// Rotates `v` so its first non-negligible coordinate is real and positive.
pub fn canonical_phase(v: &mut [Complex64]) {
    let scale = libm::sqrt(norm_sqr(v));
    if scale == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().copied().find(|z| z.norm() > 1e-12 * scale) {
        let rot = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Unit-norm dominant left singular vector of the matrix whose columns are
/// `columns`, i.e. the top eigenvector of `Σ h hᴴ`.
///
/// Power iteration started from the largest column (lowest index on ties),
/// with the phase fixed by [`canonical_phase`]. Returns `None` when every
/// column is zero.
pub fn dominant_direction(columns: &[&[Complex64]]) -> Option<Vec<Complex64>> {
    let n = columns.first()?.len();
    let mut best = None;
    let mut best_norm = 0.0;
    for (i, col) in columns.iter().enumerate() {
        let nrm = norm_sqr(col);
        if nrm > best_norm {
            best_norm = nrm;
            best = Some(i);
        }
    }
    let start = best?;
    let mut v: Vec<Complex64> = scaled(columns[start], 1.0 / libm::sqrt(best_norm));
    if columns.len() == 1 {
        canonical_phase(&mut v);
        return Some(v);
    }

    // Gram matrix Σ h hᴴ, row-major.
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for col in columns {
        for r in 0..n {
            for c in 0..n {
                gram[r * n + c] += col[r] * col[c].conj();
            }
        }
    }
    canonical_phase(&mut v);
    for _ in 0..10_000 {
        let mut next: Vec<Complex64> = (0..n)
            .map(|r| (0..n).map(|c| gram[r * n + c] * v[c]).sum())
            .collect();
        let nrm = libm::sqrt(norm_sqr(&next));
        if nrm == 0.0 {
            break;
        }
        for z in next.iter_mut() {
            *z /= nrm;
        }
        canonical_phase(&mut next);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum();
        v = next;
        if delta < 1e-28 {
            break;
        }
    }
    Some(v)
}
