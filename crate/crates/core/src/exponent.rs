//! Error exponents of matched likelihood-ratio detectors, the genie bound over a
//! finite uncertainty set, and the finite-length KL rate that converges to them.

use serde::{Deserialize, Serialize};

use crate::dominance::check_sigma2;
use crate::error::{Error, Result};
use crate::gaussian_model::{build_model, gaussian_kl, ToeplitzGaussian};
use crate::spectral::{circle_average, PsdGrid, UncertaintySet};

/// An exponent in nats per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentValue {
    pub value: f64,
    pub psd_label: String,
    pub sigma2: f64,
}

/// `(1/4pi) * integral of [log(1 + x) - x / (1 + x)]` with `x = phi / sigma2`.
pub fn error_exponent(psd: &PsdGrid, sigma2: f64) -> Result<ExponentValue> {
    check_sigma2(sigma2)?;
    let v = psd.values();
    let avg = circle_average(v.len(), |j| {
        let x = v[j] / sigma2;
        x.ln_1p() - x / (1.0 + x)
    });
    Ok(ExponentValue {
        value: (0.5 * avg).max(0.0),
        psd_label: psd.label().to_string(),
        sigma2,
    })
}

/// Smallest matched exponent over the set and the first index attaining it.
pub fn genie_bound(set: &UncertaintySet, sigma2: f64) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for (k, psd) in set.members().iter().enumerate() {
        let e = error_exponent(psd, sigma2)?.value;
        if e < best.0 {
            best = (e, k);
        }
    }
    Ok(best)
}

/// `(1/n) D(N(0, sigma2 I) || N(0, sigma2 I + Sigma_n))`.
pub fn kl_rate(psd: &PsdGrid, sigma2: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::argument("n must be >= 1"));
    }
    let model = build_model(psd, sigma2, n)?;
    let white = ToeplitzGaussian::white(n, sigma2)?;
    Ok(gaussian_kl(&white, &model)? / n as f64)
}
