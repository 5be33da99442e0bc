//! Dominance relations: the integral test for discrete measures, the
//! noise-floor dominance margin between spectra, the search for the dominated
//! member of a finite set, and the two closed-form sufficient criteria
//! (flat reference spectrum, low SNR).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{circle_average, PsdGrid, UncertaintySet};

/// Numerical thresholds used when deciding dominance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceTolerances {
    /// The log argument must stay at or above this floor on every node.
    pub boundedness_floor: f64,
    /// Margins in `[-margin_tol, 0)` count as zero.
    pub margin_tol: f64,
    /// Two spectra closer than this (max nodewise) are considered identical.
    pub equality_tol: f64,
}

impl Default for DominanceTolerances {
    fn default() -> Self {
        Self {
            boundedness_floor: 1e-6,
            margin_tol: 1e-9,
            equality_tol: 1e-12,
        }
    }
}

/// `sum_x p0(x) * (p2(x)/p0(x)) / (p1(x)/p0(x))`. `P1` is dominated by `P2`
/// with respect to `P0` iff the result is at most one.
pub fn discrete_dominance_integral(p0: &[f64], p1: &[f64], p2: &[f64]) -> Result<f64> {
    if p0.len() != p1.len() || p0.len() != p2.len() {
        return Err(Error::AbsoluteContinuity {
            index: p0.len().min(p1.len()).min(p2.len()),
            reason: format!(
                "support sizes differ: {}, {}, {}",
                p0.len(),
                p1.len(),
                p2.len()
            ),
        });
    }
    if p0.is_empty() {
        return Err(Error::argument("empty support"));
    }
    for (name, p) in [("p0", p0), ("p1", p1), ("p2", p2)] {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::argument(format!("{name} has a negative or non-finite mass")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!("{name} sums to {total}, not 1")));
        }
    }
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (index, ((&a, &b), &c)) in p0.iter().zip(p1).zip(p2).enumerate() {
        if a == 0.0 {
            if b != 0.0 || c != 0.0 {
                return Err(Error::AbsoluteContinuity {
                    index,
                    reason: "p0 vanishes where p1 or p2 does not".into(),
                });
            }
            continue;
        }
        if b == 0.0 {
            return Err(Error::AbsoluteContinuity {
                index,
                reason: "density ratio of p1 vanishes".into(),
            });
        }
        acc += a * ((c / a) / (b / a));
        mass += a;
    }
    Ok(acc / mass)
}

/// Dominance margin of `phi_star` against `phi` at noise floor `sigma2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    /// `(1/2pi) * integral of log(1 + s (phi - s) / (sigma2 + s)^2)`, or
    /// `-inf` when the log argument is not positive somewhere.
    pub margin: f64,
    /// Smallest log argument over the grid.
    pub boundedness_min: f64,
}

pub fn sigma2_dominance_margin(phi_star: &PsdGrid, phi: &PsdGrid, sigma2: f64) -> Result<Margin> {
    check_sigma2(sigma2)?;
    if phi_star.grid_size() != phi.grid_size() {
        return Err(Error::GridMismatch {
            expected: phi_star.grid_size(),
            found: phi.grid_size(),
        });
    }
    let (s, p) = (phi_star.values(), phi.values());
    let arg = |j: usize| {
        let d = sigma2 + s[j];
        1.0 + s[j] * (p[j] - s[j]) / (d * d)
    };
    let boundedness_min = (0..s.len()).map(arg).fold(f64::INFINITY, f64::min);
    let margin = if boundedness_min > 0.0 {
        circle_average(s.len(), |j| arg(j).ln())
    } else {
        f64::NEG_INFINITY
    };
    Ok(Margin {
        margin,
        boundedness_min,
    })
}

pub(crate) fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Parameter {
            field: "sigma2",
            reason: format!("must be finite and > 0, got {sigma2}"),
        });
    }
    Ok(())
}

/// Margins of one candidate against every member of a set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub candidate_index: usize,
    pub candidate_label: String,
    /// Smallest margin against any member (zero for a singleton).
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    #[serde(rename = "margins", with = "crate::serde_float::vec")]
    pub per_member_margins: Vec<f64>,
    pub boundedness_min: f64,
    #[serde(rename = "verdict")]
    pub dominated: bool,
    /// A distinct member sits at zero margin (within tolerance).
    pub boundary: bool,
}

/// Compute the report for `candidate` against every member of `set`.
pub fn dominance_report(
    set: &UncertaintySet,
    candidate: usize,
    sigma2: f64,
    tol: &DominanceTolerances,
) -> Result<DominanceReport> {
    let star = set.member(candidate);
    let mut margins = Vec::with_capacity(set.len());
    let mut boundedness_min = f64::INFINITY;
    let mut boundary = false;
    for (k, phi) in set.members().iter().enumerate() {
        if k == candidate {
            margins.push(0.0);
            boundedness_min = boundedness_min.min(1.0);
            continue;
        }
        let m = sigma2_dominance_margin(star, phi, sigma2)?;
        boundedness_min = boundedness_min.min(m.boundedness_min);
        if m.margin.abs() <= tol.margin_tol && star.max_abs_diff(phi)? > tol.equality_tol {
            boundary = true;
        }
        margins.push(m.margin);
    }
    let dominated = margins.iter().all(|m| *m >= -tol.margin_tol)
        && boundedness_min >= tol.boundedness_floor;
    let margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DominanceReport {
        candidate_index: candidate,
        candidate_label: star.label().to_string(),
        margin,
        per_member_margins: margins,
        boundedness_min,
        dominated,
        boundary,
    })
}

/// Outcome of scanning every member of a set as a dominance candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceSearch {
    /// Index of the dominated member, if one exists.
    pub dominated_index: Option<usize>,
    /// One report per candidate, in member order.
    pub reports: Vec<DominanceReport>,
}

impl DominanceSearch {
    /// The dominated member's report, or else the candidate with the largest
    /// worst-case margin.
    pub fn best(&self) -> &DominanceReport {
        match self.dominated_index {
            Some(i) => &self.reports[i],
            None => self
                .reports
                .iter()
                .max_by(|a, b| a.margin.total_cmp(&b.margin))
                .expect("nonempty set"),
        }
    }
}

pub fn find_dominated(set: &UncertaintySet, sigma2: f64) -> Result<DominanceSearch> {
    find_dominated_with(set, sigma2, &DominanceTolerances::default())
}

/// Scan all candidates in member order. The first qualifying member is
/// returned; any later qualifying member must coincide with it on the grid.
pub fn find_dominated_with(
    set: &UncertaintySet,
    sigma2: f64,
    tol: &DominanceTolerances,
) -> Result<DominanceSearch> {
    check_sigma2(sigma2)?;
    let reports = (0..set.len())
        .map(|j| dominance_report(set, j, sigma2, tol))
        .collect::<Result<Vec<_>>>()?;
    let mut found: Option<usize> = None;
    for r in reports.iter().filter(|r| r.dominated) {
        match found {
            None => found = Some(r.candidate_index),
            Some(first) => {
                let max_diff = set.member(first).max_abs_diff(set.member(r.candidate_index))?;
                if max_diff > tol.equality_tol {
                    return Err(Error::UniquenessViolation {
                        first,
                        second: r.candidate_index,
                        max_diff,
                    });
                }
            }
        }
    }
    Ok(DominanceSearch {
        dominated_index: found,
        reports,
    })
}

/// Sufficient condition for the flat spectrum `rho * sigma2` to dominate `phi`:
/// `(1/2pi) * integral of log(phi/sigma2 + (1 + 2 rho)/rho) >= log((1 + rho)^2 / rho)`.
pub fn flat_psd_criterion(phi: &PsdGrid, rho: f64, sigma2: f64) -> Result<bool> {
    check_sigma2(sigma2)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Parameter {
            field: "rho",
            reason: format!("must be finite and > 0, got {rho}"),
        });
    }
    let offset = (1.0 + 2.0 * rho) / rho;
    let v = phi.values();
    let lhs = circle_average(v.len(), |j| (v[j] / sigma2 + offset).ln());
    let rhs = ((1.0 + rho) * (1.0 + rho) / rho).ln();
    Ok(lhs >= rhs - 1e-12 * rhs.abs().max(1.0))
}

/// Low-SNR criterion: `integral of phi_star^2 <= integral of phi_star * phi`.
pub fn low_snr_criterion(phi_star: &PsdGrid, phi: &PsdGrid) -> Result<bool> {
    if phi_star.grid_size() != phi.grid_size() {
        return Err(Error::GridMismatch {
            expected: phi_star.grid_size(),
            found: phi.grid_size(),
        });
    }
    let (s, p) = (phi_star.values(), phi.values());
    let self_energy = circle_average(s.len(), |j| s[j] * s[j]);
    let cross = circle_average(s.len(), |j| s[j] * p[j]);
    Ok(self_energy <= cross)
}
