//! Reference computations that do not go through the library.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn flat_exponent(rho: f64) -> f64 {
    0.5 * ((1.0 + rho).ln() - rho / (1.0 + rho))
}

pub fn ar1_psd(variance: f64, pole: f64, omega: f64) -> f64 {
    variance * (1.0 - pole * pole) / (1.0 - 2.0 * pole * omega.cos() + pole * pole)
}

pub fn ar1_autocov(variance: f64, pole: f64, lag: usize) -> f64 {
    variance * pole.powi(lag as i32)
}

/// Composite Simpson rule with `intervals` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `(1/4pi) int_{-pi}^{pi} [log(1+x) - x/(1+x)]`, `x = phi/sigma2`.
pub fn exponent_by_integration(phi: impl Fn(f64) -> f64, sigma2: f64) -> f64 {
    let g = |w: f64| {
        let x = phi(w) / sigma2;
        x.ln_1p() - x / (1.0 + x)
    };
    simpson(g, 0.0, PI, 200_000) / (2.0 * PI)
}

pub fn toeplitz(autocov: &[f64]) -> DMatrix<f64> {
    let n = autocov.len();
    DMatrix::from_fn(n, n, |i, j| autocov[i.abs_diff(j)])
}

pub fn eigen_logdet(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.ln()).sum()
}

/// Miss probability of any energy detector at level `alpha` for white data
/// of variance `1 + rho` against noise variance 1.
pub fn energy_detector_miss(n: usize, rho: f64, alpha: f64) -> f64 {
    let chi = ChiSquared::new(n as f64).unwrap();
    let c = chi.inverse_cdf(1.0 - alpha);
    chi.cdf(c / (1.0 + rho))
}
