//! Experiment configuration: a flat TOML document with one `[[psd]]` table per
//! uncertainty-set member.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dominance::DominanceTolerances;
use crate::error::{Error, Result};
use crate::spectral::{PsdFamily, PsdGrid, UncertaintySet, DEFAULT_GRID_SIZE, MIN_GRID_SIZE};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_SIGMA2: f64 = 1.0;
pub const DEFAULT_N_VALUES: [usize; 3] = [16, 32, 64];
pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_TILT_MIN: f64 = -2.0;
pub const DEFAULT_TILT_POINTS: usize = 41;
pub const DEFAULT_FROZEN_SAMPLES: usize = 100_000;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_FW_TOL: f64 = 1e-9;
pub const DEFAULT_BETA_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const MIN_SIMULATION_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exponent,
    Dominance,
    Simulate,
    Minimax,
    Full,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exponent => "exponent",
            Mode::Dominance => "dominance",
            Mode::Simulate => "simulate",
            Mode::Minimax => "minimax",
            Mode::Full => "full",
        }
    }

    fn needs_sampling(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Minimax | Mode::Full)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponent" => Ok(Mode::Exponent),
            "dominance" => Ok(Mode::Dominance),
            "simulate" => Ok(Mode::Simulate),
            "minimax" => Ok(Mode::Minimax),
            "full" => Ok(Mode::Full),
            other => Err(Error::config(
                "mode",
                format!("must be one of exponent|dominance|simulate|minimax|full, got `{other}`"),
            )),
        }
    }
}

/// One labelled member of the uncertainty set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdSpec {
    pub label: String,
    pub family: PsdFamily,
}

/// Fully validated configuration with every default resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub sigma2: f64,
    pub alpha: f64,
    pub grid_size: usize,
    pub exponent_refine: usize,
    pub psd: Vec<PsdSpec>,
    pub candidate: Option<String>,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub tilt_min: f64,
    pub tilt_points: usize,
    pub boundedness_floor: f64,
    pub frozen_samples: usize,
    pub max_iters: usize,
    pub fw_tol: f64,
    pub beta_ladder: Vec<f64>,
    pub output: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<String>,
    sigma2: Option<f64>,
    alpha: Option<f64>,
    grid_size: Option<i64>,
    exponent_refine: Option<i64>,
    candidate: Option<String>,
    n_values: Option<Vec<i64>>,
    trials: Option<i64>,
    seed: Option<u64>,
    tilt_min: Option<f64>,
    tilt_points: Option<i64>,
    boundedness_floor: Option<f64>,
    frozen_samples: Option<i64>,
    max_iters: Option<i64>,
    fw_tol: Option<f64>,
    beta_ladder: Option<Vec<f64>>,
    output: Option<String>,
    #[serde(default)]
    psd: Vec<RawPsd>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPsd {
    label: Option<String>,
    family: Option<String>,
    level: Option<f64>,
    peak: Option<f64>,
    center: Option<f64>,
    width: Option<f64>,
    variance: Option<f64>,
    pole: Option<f64>,
    values: Option<Vec<f64>>,
}

fn positive_int(key: &str, v: Option<i64>, default: usize, min: usize) -> Result<usize> {
    match v {
        None => Ok(default),
        Some(x) if x >= min as i64 => Ok(x as usize),
        Some(x) => Err(Error::config(key, format!("must be an integer >= {min}, got {x}"))),
    }
}

impl RawPsd {
    fn into_spec(self, i: usize) -> Result<PsdSpec> {
        let key = |name: &str| format!("psd[{i}].{name}");
        let label = self
            .label
            .clone()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::config(key("label"), "is required and must be nonempty"))?;
        let family_name = self
            .family
            .clone()
            .ok_or_else(|| Error::config(key("family"), "is required"))?;
        let present: [(&str, bool); 7] = [
            ("level", self.level.is_some()),
            ("peak", self.peak.is_some()),
            ("center", self.center.is_some()),
            ("width", self.width.is_some()),
            ("variance", self.variance.is_some()),
            ("pole", self.pole.is_some()),
            ("values", self.values.is_some()),
        ];
        let allowed: &[&str] = match family_name.as_str() {
            "flat" => &["level"],
            "raised_cosine" => &["peak", "center", "width"],
            "rational_ar1" => &["variance", "pole"],
            "tabulated" => &["values"],
            other => {
                return Err(Error::config(
                    key("family"),
                    format!("must be one of flat|raised_cosine|rational_ar1|tabulated, got `{other}`"),
                ))
            }
        };
        for (name, is_set) in present {
            if is_set && !allowed.contains(&name) {
                return Err(Error::config(
                    key(name),
                    format!("is not a parameter of family `{family_name}`"),
                ));
            }
        }
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::config(key(name), format!("is required for family `{family_name}`")))
        };
        let family = match family_name.as_str() {
            "flat" => PsdFamily::Flat {
                level: need(self.level, "level")?,
            },
            "raised_cosine" => PsdFamily::RaisedCosine {
                peak: need(self.peak, "peak")?,
                center: need(self.center, "center")?,
                width: need(self.width, "width")?,
            },
            "rational_ar1" => PsdFamily::RationalAr1 {
                variance: need(self.variance, "variance")?,
                pole: need(self.pole, "pole")?,
            },
            _ => PsdFamily::Tabulated {
                values: self
                    .values
                    .ok_or_else(|| Error::config(key("values"), "is required for family `tabulated`"))?,
            },
        };
        Ok(PsdSpec { label, family })
    }
}

/// Parse and validate a TOML configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".into());
        Error::config(key, msg)
    })?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let mode = match raw.mode.as_deref() {
        Some(m) => m.parse()?,
        None => Mode::Full,
    };
    let psd = raw
        .psd
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.into_spec(i))
        .collect::<Result<Vec<_>>>()?;
    let n_values = match raw.n_values {
        None => DEFAULT_N_VALUES.to_vec(),
        Some(v) => {
            if let Some(x) = v.iter().find(|x| **x < 1) {
                return Err(Error::config("n_values", format!("entries must be >= 1, got {x}")));
            }
            v.into_iter().map(|x| x as usize).collect()
        }
    };
    let cfg = ExperimentConfig {
        mode,
        sigma2: raw.sigma2.unwrap_or(DEFAULT_SIGMA2),
        alpha: raw.alpha.unwrap_or(DEFAULT_ALPHA),
        grid_size: positive_int("grid_size", raw.grid_size, DEFAULT_GRID_SIZE, MIN_GRID_SIZE)?,
        exponent_refine: positive_int("exponent_refine", raw.exponent_refine, 1, 1)?,
        psd,
        candidate: raw.candidate,
        n_values,
        trials: positive_int("trials", raw.trials, DEFAULT_TRIALS, 1)?,
        seed: raw.seed.unwrap_or(0),
        tilt_min: raw.tilt_min.unwrap_or(DEFAULT_TILT_MIN),
        tilt_points: positive_int("tilt_points", raw.tilt_points, DEFAULT_TILT_POINTS, 1)?,
        boundedness_floor: raw
            .boundedness_floor
            .unwrap_or(DominanceTolerances::default().boundedness_floor),
        frozen_samples: positive_int("frozen_samples", raw.frozen_samples, DEFAULT_FROZEN_SAMPLES, 2)?,
        max_iters: positive_int("max_iters", raw.max_iters, DEFAULT_MAX_ITERS, 1)?,
        fw_tol: raw.fw_tol.unwrap_or(DEFAULT_FW_TOL),
        beta_ladder: raw.beta_ladder.unwrap_or_else(|| DEFAULT_BETA_LADDER.to_vec()),
        output: raw.output,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Check every constraint; used after parsing and after command-line
    /// overrides.
    pub fn validate(&self) -> Result<()> {
        let mode = self.mode;
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::config("sigma2", format!("must be finite and > 0, got {}", self.sigma2)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0,1), got {}", self.alpha)));
        }
        if self.grid_size < MIN_GRID_SIZE {
            return Err(Error::config("grid_size", format!("must be >= {MIN_GRID_SIZE}")));
        }
        if self.exponent_refine < 1 {
            return Err(Error::config("exponent_refine", "must be >= 1"));
        }
        if self.psd.is_empty() {
            return Err(Error::config("psd", "at least one [[psd]] block is required"));
        }
        let mut seen = HashSet::new();
        for p in &self.psd {
            if !seen.insert(p.label.as_str()) {
                return Err(Error::config("psd.label", format!("duplicate label `{}`", p.label)));
            }
        }
        if let Some(c) = &self.candidate {
            if !seen.contains(c.as_str()) {
                return Err(Error::config("candidate", format!("`{c}` is not a psd label")));
            }
        }
        if self.n_values.iter().any(|n| *n < 1) {
            return Err(Error::config("n_values", "entries must be >= 1"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_values", "must be strictly increasing"));
        }
        if mode.needs_sampling() {
            if self.n_values.is_empty() {
                return Err(Error::config("n_values", format!("must be nonempty in mode `{mode}`")));
            }
            if self.trials < MIN_SIMULATION_TRIALS {
                return Err(Error::config(
                    "trials",
                    format!("must be >= {MIN_SIMULATION_TRIALS} in mode `{mode}`, got {}", self.trials),
                ));
            }
            let need = crate::detection::min_calibration_trials(self.alpha);
            if self.trials < need {
                return Err(Error::config(
                    "trials",
                    format!("must be >= {need} to calibrate at alpha = {}", self.alpha),
                ));
            }
        }
        if !(self.tilt_min.is_finite() && self.tilt_min <= 0.0) {
            return Err(Error::config("tilt_min", format!("must be finite and <= 0, got {}", self.tilt_min)));
        }
        if self.tilt_points < 1 {
            return Err(Error::config("tilt_points", "must be >= 1"));
        }
        if !(self.boundedness_floor.is_finite() && self.boundedness_floor >= 0.0) {
            return Err(Error::config("boundedness_floor", "must be finite and >= 0"));
        }
        if self.frozen_samples < 2 {
            return Err(Error::config("frozen_samples", "must be >= 2"));
        }
        if self.max_iters < 1 {
            return Err(Error::config("max_iters", "must be >= 1"));
        }
        if !(self.fw_tol.is_finite() && self.fw_tol >= 0.0) {
            return Err(Error::config("fw_tol", "must be finite and >= 0"));
        }
        if self.beta_ladder.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(Error::config("beta_ladder", "entries must lie in (0,1]"));
        }
        if self.beta_ladder.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config("beta_ladder", "must be strictly decreasing"));
        }
        self.uncertainty_set().map(|_| ())
    }

    /// Sample every member on the configured grid; family parameter errors
    /// are reported against the offending block.
    pub fn uncertainty_set(&self) -> Result<UncertaintySet> {
        let members = self
            .psd
            .iter()
            .enumerate()
            .map(|(i, p)| {
                PsdGrid::from_family(&p.family, self.grid_size)
                    .map(|g| g.with_label(p.label.clone()))
                    .map_err(|e| match e {
                        Error::Parameter { field, reason } => {
                            Error::config(format!("psd[{i}].{field}"), reason)
                        }
                        other => Error::config(format!("psd[{i}]"), other.to_string()),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = UncertaintySet::new(members).map_err(|e| Error::config("psd", e.to_string()))?;
        match &self.candidate {
            Some(c) => {
                let idx = set.index_of(c).expect("validated at parse time");
                set.with_candidate(idx)
            }
            None => Ok(set),
        }
    }

    pub fn tolerances(&self) -> DominanceTolerances {
        DominanceTolerances {
            boundedness_floor: self.boundedness_floor,
            ..DominanceTolerances::default()
        }
    }

    pub fn tilt_grid(&self) -> Vec<f64> {
        crate::detection::tilt_grid(self.tilt_min, self.tilt_points)
    }
}
