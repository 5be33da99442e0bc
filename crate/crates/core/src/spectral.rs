//! Power spectral densities sampled on a uniform half-grid over `[0, pi]`.
//!
//! A [`PsdGrid`] stores `M` nonnegative samples at `omega_j = pi * j / (M - 1)`.
//! The full density on `[-pi, pi]` is the even extension and is never stored.
//! Integrals over the circle use the composite trapezoid rule on the
//! half-grid with half-weighted endpoints, which for an even function is the
//! periodic trapezoid rule on `2 (M - 1)` points.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_GRID_SIZE: usize = 8;
pub const DEFAULT_GRID_SIZE: usize = 4096;

/// Parametric families a [`PsdGrid`] can be generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PsdFamily {
    /// Constant level (white signal).
    Flat { level: f64 },
    /// `peak * (1 + cos(pi * d / width)) / 2` for `d = ||omega| - center| < width`, zero elsewhere.
    RaisedCosine { peak: f64, center: f64, width: f64 },
    /// Spectrum of an AR(1) process with the given variance and pole:
    /// `v (1 - a^2) / (1 - 2 a cos(omega) + a^2)`.
    RationalAr1 { variance: f64, pole: f64 },
    /// Explicit samples on the half-grid.
    Tabulated { values: Vec<f64> },
}

impl PsdFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PsdFamily::Flat { .. } => "flat",
            PsdFamily::RaisedCosine { .. } => "raised_cosine",
            PsdFamily::RationalAr1 { .. } => "rational_ar1",
            PsdFamily::Tabulated { .. } => "tabulated",
        }
    }

    fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Error {
            Error::Parameter {
                field,
                reason: reason.into(),
            }
        }
        match *self {
            PsdFamily::Flat { level } => {
                if !(level.is_finite() && level >= 0.0) {
                    return Err(bad("level", format!("must be finite and >= 0, got {level}")));
                }
            }
            PsdFamily::RaisedCosine {
                peak,
                center,
                width,
            } => {
                if !(peak.is_finite() && peak >= 0.0) {
                    return Err(bad("peak", format!("must be finite and >= 0, got {peak}")));
                }
                if !(0.0..=PI).contains(&center) {
                    return Err(bad("center", format!("must lie in [0, pi], got {center}")));
                }
                if !(width.is_finite() && width > 0.0) {
                    return Err(bad("width", format!("must be finite and > 0, got {width}")));
                }
            }
            PsdFamily::RationalAr1 { variance, pole } => {
                if !(variance.is_finite() && variance > 0.0) {
                    return Err(bad(
                        "variance",
                        format!("must be finite and > 0, got {variance}"),
                    ));
                }
                if !(pole.abs() < 1.0) {
                    return Err(bad("pole", format!("magnitude must lie in [0, 1), got {pole}")));
                }
            }
            PsdFamily::Tabulated { ref values } => {
                if let Some((j, v)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
                {
                    return Err(bad(
                        "values",
                        format!("entry {j} must be finite and >= 0, got {v}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn value_at(&self, omega: f64) -> f64 {
        match *self {
            PsdFamily::Flat { level } => level,
            PsdFamily::RaisedCosine {
                peak,
                center,
                width,
            } => {
                let d = (omega.abs() - center).abs();
                if d < width {
                    0.5 * peak * (1.0 + (PI * d / width).cos())
                } else {
                    0.0
                }
            }
            PsdFamily::RationalAr1 { variance, pole } => {
                let a = pole;
                variance * (1.0 - a * a) / (1.0 - 2.0 * a * omega.cos() + a * a)
            }
            PsdFamily::Tabulated { .. } => unreachable!("tabulated values are copied verbatim"),
        }
    }
}

/// A sampled, even, nonnegative spectral density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdGrid {
    label: String,
    values: Vec<f64>,
}

/// Node frequency `omega_j` on an `m`-point half-grid.
pub fn grid_node(m: usize, j: usize) -> f64 {
    PI * j as f64 / (m - 1) as f64
}

/// `(1 / 2pi) * integral over [-pi, pi]` of the even function whose half-grid
/// samples are produced by `f`.
pub(crate) fn circle_average<F: FnMut(usize) -> f64>(m: usize, mut f: F) -> f64 {
    let last = m - 1;
    let mut acc = 0.5 * (f(0) + f(last));
    for j in 1..last {
        acc += f(j);
    }
    acc / last as f64
}

impl PsdGrid {
    /// Sample `family` on an `grid_size`-point half-grid. The label defaults to
    /// the family name.
    pub fn from_family(family: &PsdFamily, grid_size: usize) -> Result<Self> {
        if grid_size < MIN_GRID_SIZE {
            return Err(Error::Parameter {
                field: "grid_size",
                reason: format!("must be >= {MIN_GRID_SIZE}, got {grid_size}"),
            });
        }
        family.validate()?;
        let values = match family {
            PsdFamily::Tabulated { values } => {
                if values.len() != grid_size {
                    return Err(Error::GridMismatch {
                        expected: grid_size,
                        found: values.len(),
                    });
                }
                values.clone()
            }
            other => (0..grid_size)
                .map(|j| other.value_at(grid_node(grid_size, j)).max(0.0))
                .collect(),
        };
        Ok(Self {
            label: family.name().to_string(),
            values,
        })
    }

    pub fn from_values(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let grid_size = values.len();
        let mut psd = Self::from_family(&PsdFamily::Tabulated { values }, grid_size)?;
        psd.label = label.into();
        Ok(psd)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Constant spectrum level, if every sample is equal.
    pub fn flat_level(&self) -> Option<f64> {
        let first = self.values[0];
        self.values.iter().all(|v| *v == first).then_some(first)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// `(1 / 2pi) * integral of phi` over the circle.
    pub fn mean(&self) -> f64 {
        circle_average(self.grid_size(), |j| self.values[j])
    }

    /// Value at `omega` by linear interpolation of `|omega|` between nodes.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !(omega.abs() <= PI) {
            return Err(Error::Domain(omega));
        }
        let m = self.grid_size();
        let mut x = omega.abs() * (m - 1) as f64 / PI;
        if (x - x.round()).abs() <= 1e-9 {
            x = x.round();
        }
        let j = (x.floor() as usize).min(m - 2);
        let frac = x - j as f64;
        if frac == 0.0 {
            return Ok(self.values[j]);
        }
        Ok((1.0 - frac) * self.values[j] + frac * self.values[j + 1])
    }

    /// Resample onto `(M - 1) * factor + 1` nodes by linear interpolation.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::argument("refinement factor must be >= 1"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = (self.grid_size() - 1) * factor + 1;
        let values = (0..m)
            .map(|j| {
                let (k, r) = (j / factor, j % factor);
                if r == 0 {
                    self.values[k]
                } else {
                    let t = r as f64 / factor as f64;
                    (1.0 - t) * self.values[k] + t * self.values[k + 1]
                }
            })
            .collect();
        Ok(Self {
            label: self.label.clone(),
            values,
        })
    }

    fn check_same_grid(&self, other: &PsdGrid) -> Result<()> {
        if self.grid_size() != other.grid_size() {
            return Err(Error::GridMismatch {
                expected: self.grid_size(),
                found: other.grid_size(),
            });
        }
        Ok(())
    }

    /// Largest nodewise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &PsdGrid) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Sample a family on a grid.
pub fn make_psd(family: &PsdFamily, grid_size: usize) -> Result<PsdGrid> {
    PsdGrid::from_family(family, grid_size)
}

pub fn eval_psd(psd: &PsdGrid, omega: f64) -> Result<f64> {
    psd.eval(omega)
}

/// Autocovariance `c[m] = (1/2pi) * integral of phi(omega) cos(m omega)` for
/// lags `0..=max_lag`.
///
/// The trapezoid sum is a nonnegative combination of cosines at the grid
/// frequencies, so the resulting Toeplitz matrices are positive semidefinite
/// for any lag count. A constant spectrum returns the exact white sequence.
pub fn autocovariance(psd: &PsdGrid, max_lag: usize) -> Vec<f64> {
    if let Some(level) = psd.flat_level() {
        let mut c = vec![0.0; max_lag + 1];
        c[0] = level;
        return c;
    }
    let m = psd.grid_size();
    let period = 2 * (m - 1);
    let cos_table: Vec<f64> = (0..period)
        .map(|k| (PI * k as f64 / (m - 1) as f64).cos())
        .collect();
    let values = psd.values();
    (0..=max_lag)
        .map(|lag| circle_average(m, |j| values[j] * cos_table[(lag * j) % period]))
        .collect()
}

/// Pointwise minimum over `members`, labeled `"envelope"`.
pub fn lower_envelope(members: &[PsdGrid]) -> Result<PsdGrid> {
    let first = members
        .first()
        .ok_or_else(|| Error::argument("lower envelope of an empty set"))?;
    let mut values = first.values.clone();
    for psd in &members[1..] {
        first.check_same_grid(psd)?;
        for (v, x) in values.iter_mut().zip(&psd.values) {
            *v = v.min(*x);
        }
    }
    Ok(PsdGrid {
        label: "envelope".to_string(),
        values,
    })
}

/// A finite set of candidate signal spectra on a shared grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    members: Vec<PsdGrid>,
    candidate_index: Option<usize>,
}

impl UncertaintySet {
    pub fn new(members: Vec<PsdGrid>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::argument("uncertainty set needs at least one member"))?;
        for psd in &members[1..] {
            first.check_same_grid(psd)?;
        }
        Ok(Self {
            members,
            candidate_index: None,
        })
    }

    pub fn with_candidate(mut self, index: usize) -> Result<Self> {
        if index >= self.members.len() {
            return Err(Error::argument(format!(
                "candidate index {index} out of range for {} members",
                self.members.len()
            )));
        }
        self.candidate_index = Some(index);
        Ok(self)
    }

    pub fn members(&self) -> &[PsdGrid] {
        &self.members
    }

    pub fn member(&self, index: usize) -> &PsdGrid {
        &self.members[index]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.members[0].grid_size()
    }

    pub fn candidate_index(&self) -> Option<usize> {
        self.candidate_index
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.members.iter().position(|p| p.label() == label)
    }

    pub fn lower_envelope(&self) -> PsdGrid {
        lower_envelope(&self.members).expect("set is nonempty with a shared grid")
    }
}
