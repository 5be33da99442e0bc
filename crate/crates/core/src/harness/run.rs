//! Experiment orchestration: each mode composes the numerical modules and
//! returns a [`ReportRecord`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detection::{empirical_exponent, ExponentEstimate, MixtureWeights};
use crate::dominance::{find_dominated_with, DominanceSearch};
use crate::error::{Error, Result};
use crate::exponent::{error_exponent, genie_bound, kl_rate, ExponentValue};
use crate::gaussian_model::{build_model, ratio_expectation, ToeplitzGaussian};
use crate::minimax::{
    kkt_certificate, minimize_mixture_weights, Game, KktCertificate, LlrTable, MixtureBank,
    MixtureOptimum, RegularityProbe, UtilityEstimate,
};
use crate::rng::derive_seed;
use crate::serde_float;
use crate::spectral::UncertaintySet;

use super::config::{ExperimentConfig, Mode};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub toolkit_version: String,
    pub mode: Mode,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub payload: Payload,
    pub wall_time_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Exponent(ExponentPayload),
    Dominance(DominancePayload),
    Simulate(SimulatePayload),
    Minimax(MinimaxPayload),
    Full(FullPayload),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenieBound {
    pub value: f64,
    pub index: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlRateRow {
    pub n: usize,
    pub member: String,
    pub kl_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPayload {
    pub exponents: Vec<ExponentValue>,
    pub genie: GenieBound,
    pub kl_rates: Vec<KlRateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteNRow {
    pub n: usize,
    pub member: String,
    #[serde(with = "serde_float")]
    pub margin: f64,
    #[serde(with = "serde_float")]
    pub ratio_expectation: f64,
    pub finite_n_dominates: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominancePayload {
    pub search: DominanceSearch,
    /// Member the finite-N rows are computed for.
    pub candidate_index: usize,
    pub candidate_label: String,
    pub finite_n: Vec<FiniteNRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub member: String,
    pub estimate: ExponentEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorRun {
    /// Label of the member whose likelihood-ratio test this is.
    pub detector: String,
    pub truths: Vec<TruthEstimate>,
    /// Smallest slope over truths.
    pub worst_case_slope: f64,
    pub worst_case_ci_half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatePayload {
    pub detector_index: usize,
    pub run: DetectorRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxAtN {
    pub n: usize,
    pub certificate: KktCertificate,
    pub optimum: MixtureOptimum,
    pub saddle_utility: UtilityEstimate,
    pub saddle_utility_se: f64,
    pub probe: RegularityProbe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxPayload {
    pub candidate_index: usize,
    pub candidate_label: String,
    pub per_n: Vec<MinimaxAtN>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub n: usize,
    pub robust_worst_case: f64,
    #[serde(with = "serde_float")]
    pub best_other_worst_case: f64,
    pub best_other_detector: Option<String>,
    pub ci_half_width: f64,
    /// Robust detector's worst case is within `2 * ci` of every alternative.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullPayload {
    pub search: DominanceSearch,
    pub candidate_index: usize,
    pub candidate_label: String,
    pub genie: GenieBound,
    pub certificates: Vec<(usize, KktCertificate)>,
    pub detectors: Vec<DetectorRun>,
    pub ordering: OrderingCheck,
}

/// Run the configured mode.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportRecord> {
    config.validate()?;
    let start = Instant::now();
    let set = config.uncertainty_set()?;
    let payload = match config.mode {
        Mode::Exponent => Payload::Exponent(run_exponent(config, &set).map_err(|e| e.in_stage("exponent"))?),
        Mode::Dominance => Payload::Dominance(run_dominance(config, &set)?),
        Mode::Simulate => Payload::Simulate(run_simulate(config, &set)?),
        Mode::Minimax => Payload::Minimax(run_minimax(config, &set)?),
        Mode::Full => Payload::Full(run_full(config, &set)?),
    };
    Ok(ReportRecord {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        mode: config.mode,
        seed: config.seed,
        config: config.clone(),
        payload,
        wall_time_ms: start.elapsed().as_millis() as u64,
    })
}

fn genie(config: &ExperimentConfig, set: &UncertaintySet) -> Result<GenieBound> {
    let refined = refined_set(config, set)?;
    let (value, index) = genie_bound(&refined, config.sigma2)?;
    Ok(GenieBound {
        value,
        index,
        label: set.member(index).label().to_string(),
    })
}

fn refined_set(config: &ExperimentConfig, set: &UncertaintySet) -> Result<UncertaintySet> {
    if config.exponent_refine == 1 {
        return Ok(set.clone());
    }
    let members = set
        .members()
        .iter()
        .map(|p| p.refined(config.exponent_refine))
        .collect::<Result<Vec<_>>>()?;
    UncertaintySet::new(members)
}

fn run_exponent(config: &ExperimentConfig, set: &UncertaintySet) -> Result<ExponentPayload> {
    let refined = refined_set(config, set)?;
    let exponents = refined
        .members()
        .iter()
        .map(|p| error_exponent(p, config.sigma2))
        .collect::<Result<Vec<_>>>()?;
    let mut kl_rates = Vec::new();
    for &n in &config.n_values {
        for p in set.members() {
            kl_rates.push(KlRateRow {
                n,
                member: p.label().to_string(),
                kl_rate: kl_rate(p, config.sigma2, n)?,
            });
        }
    }
    Ok(ExponentPayload {
        exponents,
        genie: genie(config, set)?,
        kl_rates,
    })
}

/// Configured candidate, else the dominated member, else the genie argmin.
fn choose_candidate(config: &ExperimentConfig, set: &UncertaintySet, search: &DominanceSearch) -> Result<usize> {
    if let Some(i) = set.candidate_index() {
        return Ok(i);
    }
    if let Some(i) = search.dominated_index {
        return Ok(i);
    }
    Ok(genie(config, set)?.index)
}

fn models_at(set: &UncertaintySet, sigma2: f64, n: usize) -> Result<Vec<ToeplitzGaussian>> {
    set.members()
        .iter()
        .map(|p| build_model(p, sigma2, n))
        .collect()
}

fn run_dominance(config: &ExperimentConfig, set: &UncertaintySet) -> Result<DominancePayload> {
    let search = find_dominated_with(set, config.sigma2, &config.tolerances())
        .map_err(|e| e.in_stage("find_dominated"))?;
    let candidate = choose_candidate(config, set, &search)?;
    let margins = &search.reports[candidate].per_member_margins;
    let mut finite_n = Vec::new();
    for &n in &config.n_values {
        let models = models_at(set, config.sigma2, n).map_err(|e| e.in_stage("build_model"))?;
        for (k, m) in models.iter().enumerate() {
            let r = ratio_expectation(config.sigma2, &models[candidate], m)
                .map_err(|e| e.in_stage("ratio_expectation"))?;
            finite_n.push(FiniteNRow {
                n,
                member: set.member(k).label().to_string(),
                margin: margins[k],
                ratio_expectation: r.value,
                finite_n_dominates: r.dominates(),
            });
        }
    }
    Ok(DominancePayload {
        candidate_index: candidate,
        candidate_label: set.member(candidate).label().to_string(),
        search,
        finite_n,
    })
}

/// Likelihood-ratio test of member `detector` evaluated against every member
/// as the truth. Seeds depend only on the master seed, so detectors share
/// samples.
fn detector_run(config: &ExperimentConfig, set: &UncertaintySet, detector: usize) -> Result<DetectorRun> {
    let weights = MixtureWeights::vertex(set.len(), detector);
    let mut truths = Vec::with_capacity(set.len());
    for truth in 0..set.len() {
        let estimate = empirical_exponent(
            set,
            &weights,
            truth,
            &config.n_values,
            config.trials,
            config.alpha,
            config.sigma2,
            derive_seed(config.seed, "simulate", truth as u64),
        )?;
        truths.push(TruthEstimate {
            member: set.member(truth).label().to_string(),
            estimate,
        });
    }
    let worst = truths
        .iter()
        .min_by(|a, b| a.estimate.slope.total_cmp(&b.estimate.slope))
        .expect("nonempty set");
    Ok(DetectorRun {
        detector: set.member(detector).label().to_string(),
        worst_case_slope: worst.estimate.slope,
        worst_case_ci_half_width: worst.estimate.ci_half_width,
        truths,
    })
}

fn run_simulate(config: &ExperimentConfig, set: &UncertaintySet) -> Result<SimulatePayload> {
    let search = find_dominated_with(set, config.sigma2, &config.tolerances())
        .map_err(|e| e.in_stage("find_dominated"))?;
    let detector_index = choose_candidate(config, set, &search)?;
    let run = detector_run(config, set, detector_index).map_err(|e| e.in_stage("empirical_exponent"))?;
    Ok(SimulatePayload { detector_index, run })
}

fn run_minimax(config: &ExperimentConfig, set: &UncertaintySet) -> Result<MinimaxPayload> {
    let search = find_dominated_with(set, config.sigma2, &config.tolerances())
        .map_err(|e| e.in_stage("find_dominated"))?;
    let candidate = choose_candidate(config, set, &search)?;
    let k = set.len();
    let mut per_n = Vec::new();
    for &n in &config.n_values {
        let models = models_at(set, config.sigma2, n).map_err(|e| e.in_stage("build_model"))?;
        let certificate =
            kkt_certificate(candidate, &models, config.sigma2).map_err(|e| e.in_stage("kkt_certificate"))?;
        let table = LlrTable::frozen(&models, config.frozen_samples, derive_seed(config.seed, "frozen_h0", n as u64))
            .map_err(|e| e.in_stage("frozen_samples"))?;
        let optimum = minimize_mixture_weights(&table, &MixtureWeights::uniform(k), config.max_iters, config.fw_tol)
            .map_err(|e| e.in_stage("minimize_mixture_weights"))?;
        let bank = MixtureBank::new(&models, config.frozen_samples, derive_seed(config.seed, "mixture_bank", n as u64))
            .map_err(|e| e.in_stage("mixture_bank"))?;
        let game = Game::new(table, bank, config.tilt_grid()).map_err(|e| e.in_stage("utility"))?;
        let e_c = MixtureWeights::vertex(k, candidate);
        let (saddle_utility, saddle_utility_se) =
            game.utility_with_se(&e_c, &e_c).map_err(|e| e.in_stage("utility"))?;
        let probe = game
            .regularity_probe(&e_c, &MixtureWeights::uniform(k), &config.beta_ladder)
            .map_err(|e| e.in_stage("regularity_probe"))?;
        per_n.push(MinimaxAtN {
            n,
            certificate,
            optimum,
            saddle_utility,
            saddle_utility_se,
            probe,
        });
    }
    Ok(MinimaxPayload {
        candidate_index: candidate,
        candidate_label: set.member(candidate).label().to_string(),
        per_n,
    })
}

fn run_full(config: &ExperimentConfig, set: &UncertaintySet) -> Result<FullPayload> {
    let search = find_dominated_with(set, config.sigma2, &config.tolerances())
        .map_err(|e| e.in_stage("find_dominated"))?;
    let candidate = choose_candidate(config, set, &search)?;
    let genie = genie(config, set).map_err(|e| e.in_stage("genie_bound"))?;
    let mut certificates = Vec::new();
    for &n in &config.n_values {
        let models = models_at(set, config.sigma2, n).map_err(|e| e.in_stage("build_model"))?;
        let cert =
            kkt_certificate(candidate, &models, config.sigma2).map_err(|e| e.in_stage("kkt_certificate"))?;
        certificates.push((n, cert));
    }
    let mut detectors = Vec::with_capacity(set.len());
    for d in 0..set.len() {
        detectors.push(detector_run(config, set, d).map_err(|e| e.in_stage("empirical_exponent"))?);
    }
    let robust = &detectors[candidate];
    let best_other = detectors
        .iter()
        .enumerate()
        .filter(|(d, _)| *d != candidate)
        .max_by(|a, b| a.1.worst_case_slope.total_cmp(&b.1.worst_case_slope));
    let (best_other_worst_case, best_other_detector) = match best_other {
        Some((_, run)) => (run.worst_case_slope, Some(run.detector.clone())),
        None => (f64::NEG_INFINITY, None),
    };
    let ci_half_width = robust.worst_case_ci_half_width;
    let ordering = OrderingCheck {
        n: *config.n_values.last().expect("validated nonempty"),
        robust_worst_case: robust.worst_case_slope,
        best_other_worst_case,
        best_other_detector,
        ci_half_width,
        consistent: robust.worst_case_slope >= best_other_worst_case - 2.0 * ci_half_width,
    };
    if !ordering.robust_worst_case.is_finite() {
        return Err(Error::Numerical("robust detector slope is not finite".into()).in_stage("ordering"));
    }
    Ok(FullPayload {
        candidate_index: candidate,
        candidate_label: set.member(candidate).label().to_string(),
        search,
        genie,
        certificates,
        detectors,
        ordering,
    })
}
