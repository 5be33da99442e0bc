//! Browser bindings: three JSON-in/JSON-out operations over a small
//! uncertainty set, plus plain-Rust versions of each for native use.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use robust_psd::detection::{empirical_exponent, MixtureWeights};
use robust_psd::dominance::{find_dominated, DominanceSearch};
use robust_psd::exponent::{error_exponent, genie_bound, kl_rate};
use robust_psd::gaussian_model::{build_model, ratio_expectation};
use robust_psd::spectral::{grid_node, make_psd, PsdFamily, PsdGrid, UncertaintySet};

pub const MAX_GRID: usize = 4096;
pub const MAX_N: usize = 512;
pub const MAX_TRIALS: usize = 50_000;
/// Points per curve sent back for plotting.
const CURVE_POINTS: usize = 257;

#[derive(Clone, Debug, Deserialize)]
pub struct Member {
    pub label: String,
    #[serde(flatten)]
    pub family: PsdFamily,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SetRequest {
    pub members: Vec<Member>,
    pub sigma2: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

fn default_grid() -> usize {
    1024
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub label: String,
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectraReport {
    pub curves: Vec<Curve>,
    pub envelope: Curve,
    pub search: DominanceSearch,
    pub exponents: Vec<f64>,
    pub genie_value: f64,
    pub genie_index: usize,
}

#[derive(Clone, Debug, Deserialize)]
pub struct FiniteNRequest {
    #[serde(flatten)]
    pub set: SetRequest,
    pub candidate: usize,
    pub n_values: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteNReport {
    pub n_values: Vec<usize>,
    /// `ratios[i][k]`: candidate against member `k` at `n_values[i]`;
    /// `null` where the expectation diverges.
    pub ratios: Vec<Vec<Option<f64>>>,
    /// `kl_rates[i][k]`: member `k` at `n_values[i]`.
    pub kl_rates: Vec<Vec<f64>>,
    pub exponents: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SimulateRequest {
    #[serde(flatten)]
    pub set: SetRequest,
    pub detector: usize,
    pub truth: usize,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub n_values: Vec<usize>,
    pub threshold: Vec<f64>,
    pub fa_hat: Vec<f64>,
    pub miss_hat: Vec<f64>,
    /// `null` for censored entries.
    pub miss_log: Vec<Option<f64>>,
    pub truth_exponent: f64,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl SetRequest {
    fn build(&self) -> Result<UncertaintySet, String> {
        if !(8..=MAX_GRID).contains(&self.grid_size) {
            return Err(format!("grid_size must lie in [8, {MAX_GRID}]"));
        }
        let members = self
            .members
            .iter()
            .map(|m| make_psd(&m.family, self.grid_size).map(|p| p.with_label(m.label.clone())))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        UncertaintySet::new(members).map_err(err)
    }
}

fn check_n(n_values: &[usize]) -> Result<(), String> {
    if n_values.is_empty() || n_values.iter().any(|n| *n == 0 || *n > MAX_N) {
        return Err(format!("n values must lie in [1, {MAX_N}]"));
    }
    Ok(())
}

fn curve(p: &PsdGrid) -> Curve {
    let m = p.grid_size();
    let step = ((m - 1) as f64 / (CURVE_POINTS - 1) as f64).max(1.0);
    let mut omega = Vec::new();
    let mut values = Vec::new();
    let mut x = 0.0;
    while x <= (m - 1) as f64 + 1e-9 {
        let j = (x.round() as usize).min(m - 1);
        omega.push(grid_node(m, j));
        values.push(p.values()[j]);
        x += step;
    }
    Curve {
        label: p.label().to_string(),
        omega,
        values,
    }
}

fn exponents(set: &UncertaintySet, sigma2: f64) -> Result<Vec<f64>, String> {
    set.members()
        .iter()
        .map(|p| error_exponent(p, sigma2).map(|e| e.value).map_err(err))
        .collect()
}

/// Spectra, lower envelope, dominance search and per-member exponents.
pub fn spectra(req: &SetRequest) -> Result<SpectraReport, String> {
    let set = req.build()?;
    let search = find_dominated(&set, req.sigma2).map_err(err)?;
    let (genie_value, genie_index) = genie_bound(&set, req.sigma2).map_err(err)?;
    Ok(SpectraReport {
        curves: set.members().iter().map(curve).collect(),
        envelope: curve(&set.lower_envelope().with_label("envelope")),
        search,
        exponents: exponents(&set, req.sigma2)?,
        genie_value,
        genie_index,
    })
}

/// Finite-n ratio expectations of one candidate and KL rates of every member.
pub fn finite_n(req: &FiniteNRequest) -> Result<FiniteNReport, String> {
    let set = req.set.build()?;
    check_n(&req.n_values)?;
    if req.candidate >= set.len() {
        return Err(format!("candidate {} is out of range", req.candidate));
    }
    let s2 = req.set.sigma2;
    let mut ratios = Vec::new();
    let mut kl_rates = Vec::new();
    for &n in &req.n_values {
        let models = set
            .members()
            .iter()
            .map(|p| build_model(p, s2, n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let row = models
            .iter()
            .map(|m| {
                ratio_expectation(s2, &models[req.candidate], m)
                    .map(|e| (!e.diverged).then_some(e.value))
                    .map_err(err)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ratios.push(row);
        kl_rates.push(
            set.members()
                .iter()
                .map(|p| kl_rate(p, s2, n).map_err(err))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(FiniteNReport {
        n_values: req.n_values.clone(),
        ratios,
        kl_rates,
        exponents: exponents(&set, s2)?,
    })
}

/// Monte Carlo miss exponents of one member's likelihood-ratio test.
pub fn simulate(req: &SimulateRequest) -> Result<SimulateReport, String> {
    let set = req.set.build()?;
    check_n(&req.n_values)?;
    if req.trials > MAX_TRIALS {
        return Err(format!("at most {MAX_TRIALS} trials in the browser"));
    }
    if req.detector >= set.len() || req.truth >= set.len() {
        return Err("detector or truth index out of range".into());
    }
    let weights = MixtureWeights::vertex(set.len(), req.detector);
    let e = empirical_exponent(
        &set,
        &weights,
        req.truth,
        &req.n_values,
        req.trials,
        req.alpha,
        req.set.sigma2,
        req.seed,
    )
    .map_err(err)?;
    Ok(SimulateReport {
        n_values: e.n_values,
        threshold: e.threshold,
        fa_hat: e.fa_hat,
        miss_hat: e.miss_hat,
        miss_log: e
            .miss_log
            .iter()
            .zip(&e.censored)
            .map(|(m, c)| (!c).then_some(*m))
            .collect(),
        truth_exponent: error_exponent(set.member(req.truth), req.set.sigma2)
            .map_err(err)?
            .value,
    })
}

fn respond<Q: for<'de> Deserialize<'de>, R: Serialize>(
    request: &str,
    op: impl Fn(&Q) -> Result<R, String>,
) -> String {
    let out = serde_json::from_str::<Q>(request)
        .map_err(|e| format!("bad request: {e}"))
        .and_then(|q| op(&q));
    match out {
        Ok(r) => serde_json::to_string(&r).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen(js_name = analyseSpectra)]
pub fn analyse_spectra_js(request: &str) -> String {
    respond(request, spectra)
}

#[wasm_bindgen(js_name = finiteN)]
pub fn finite_n_js(request: &str) -> String {
    respond(request, finite_n)
}

#[wasm_bindgen(js_name = simulateMisses)]
pub fn simulate_js(request: &str) -> String {
    respond(request, simulate)
}
