//! Time-domain Prony fitting by the matrix-pencil method.
//!
//! Real and imaginary parts share one real-valued pencil, so the recovered
//! decay rates come in complex-conjugate pairs (or are real). That keeps the
//! `σ = ±` channels expandable over a common set of exponents.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{DeomError, Result};

/// Decay rates `γ_k` with `x(n dt) ≈ Σ η_k e^{-γ_k n dt}`; `Re γ_k > 0`.
/// `pencil` defaults to a third of the samples (at most 200).
pub fn fit_rates(samples: &[C64], dt: f64, n_terms: usize, pencil: Option<usize>) -> Result<Vec<C64>> {
    let n = samples.len();
    if n_terms == 0 || n < 4 * n_terms {
        return Err(DeomError::Invalid(format!(
            "need at least {} samples for {n_terms} terms, got {n}",
            4 * n_terms
        )));
    }
    let pencil = pencil
        .unwrap_or(n / 3)
        .clamp(n_terms + 1, 200.max(n_terms + 1))
        .min(n - n_terms);
    let rows = n - pencil;
    let mut y = DMatrix::<f64>::zeros(2 * rows, pencil + 1);
    for r in 0..rows {
        for c in 0..=pencil {
            y[(r, c)] = samples[r + c].re;
            y[(rows + r, c)] = samples[r + c].im;
        }
    }
    let svd = y.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    // singular values come sorted in decreasing order
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = n_terms.min(order.len());
    let mut v = DMatrix::<f64>::zeros(pencil + 1, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        for r in 0..=pencil {
            v[(r, col)] = v_t[(idx, r)];
        }
    }
    let v1 = v.rows(0, pencil).into_owned();
    let v2 = v.rows(1, pencil).into_owned();
    let pinv = v1
        .pseudo_inverse(1e-14)
        .map_err(|e| DeomError::Invalid(e.to_string()))?;
    let shift = pinv * v2;
    let z = shift.complex_eigenvalues();
    let rates = z
        .iter()
        .map(|&zk| {
            // reflect growing or marginal roots into the unit disk
            let zk = if zk.norm() >= 1.0 { 1.0 / zk.conj() * 0.999_999 } else { zk };
            -zk.ln() / dt
        })
        .collect();
    Ok(rates)
}

/// Least-squares amplitudes for fixed rates.
pub fn fit_amplitudes(samples: &[C64], dt: f64, rates: &[C64]) -> Result<Vec<C64>> {
    let n = samples.len();
    let k = rates.len();
    let mut a = DMatrix::<C64>::zeros(n, k);
    for i in 0..n {
        let t = i as f64 * dt;
        for (j, g) in rates.iter().enumerate() {
            a[(i, j)] = (-g * t).exp();
        }
    }
    let b = DMatrix::from_column_slice(n, 1, samples);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|e| DeomError::Invalid(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}
