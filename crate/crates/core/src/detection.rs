//! Finite-length mixture detectors: the decision statistic, Neyman-Pearson
//! threshold calibration, Monte Carlo error probabilities, empirical miss
//! exponents, and Chernoff-bound exponents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_model::{build_model, fill_standard_normal, ToeplitzGaussian};
use crate::parallel;
use crate::rng::{derive_seed, Substreams};
use crate::serde_float;
use crate::spectral::UncertaintySet;

const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Minimum number of miss events for an uncensored estimate.
pub const CENSOR_MIN_EVENTS: u64 = 10;
/// Minimum number of Monte Carlo trials for error-probability estimates.
pub const MIN_ESTIMATION_TRIALS: usize = 1000;
const Z_95: f64 = 1.959_963_984_540_054;

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::argument("mixture weights must be nonempty"));
        }
        if let Some(k) = w.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::argument(format!(
                "weight {k} = {} is outside [0, 1]",
                w[k]
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::argument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// All mass on component `index`.
    pub fn vertex(k: usize, index: usize) -> Self {
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        Self(w)
    }

    /// `theta * a + (1 - theta) * b`, renormalised against rounding.
    pub fn blend(a: &Self, b: &Self, theta: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::argument("weight vectors differ in length"));
        }
        let mut w: Vec<f64> = a
            .0
            .iter()
            .zip(&b.0)
            .map(|(x, y)| (theta * x + (1.0 - theta) * y).clamp(0.0, 1.0))
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.0.iter().map(|w| w.ln()).collect()
    }

    /// Pick a component index from a uniform draw `u` in `[0, 1)`.
    pub(crate) fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (k, w) in self.0.iter().enumerate() {
            if *w > 0.0 {
                acc += w;
                last = k;
                if u < acc {
                    return k;
                }
            }
        }
        last
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

/// `log sum exp(x_i)` with a max shift; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log mean exp(x_i)`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs.iter().copied()) - (xs.len() as f64).ln()
}

/// Mixture statistic `g_N(y; q)` bound to a fixed set of candidate models.
#[derive(Clone, Debug)]
pub struct Detector {
    weights: MixtureWeights,
    log_weights: Vec<f64>,
    models: Vec<ToeplitzGaussian>,
    sigma2: f64,
    n: usize,
}

impl Detector {
    pub fn new(weights: MixtureWeights, models: Vec<ToeplitzGaussian>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::argument("detector needs at least one model"));
        }
        if weights.len() != models.len() {
            return Err(Error::argument(format!(
                "{} weights for {} models",
                weights.len(),
                models.len()
            )));
        }
        let (n, sigma2) = (models[0].n(), models[0].sigma2());
        if models.iter().any(|m| m.n() != n || m.sigma2() != sigma2) {
            return Err(Error::argument("models must share n and sigma2"));
        }
        Ok(Self {
            log_weights: weights.log_weights(),
            weights,
            models,
            sigma2,
            n,
        })
    }

    /// Detector for every member of `set` at length `n`.
    pub fn for_set(set: &UncertaintySet, weights: MixtureWeights, sigma2: f64, n: usize) -> Result<Self> {
        let models = set
            .members()
            .iter()
            .map(|p| build_model(p, sigma2, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, models)
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.weights
    }

    pub fn models(&self) -> &[ToeplitzGaussian] {
        &self.models
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `g_N(y; q)`.
    pub fn statistic(&self, y: &[f64]) -> f64 {
        let terms = self
            .models
            .iter()
            .zip(&self.log_weights)
            .filter(|(_, lw)| lw.is_finite())
            .map(|(m, lw)| lw + m.log_lr(y));
        let terms: Vec<f64> = terms.collect();
        log_sum_exp(terms.iter().copied()) / self.n as f64
    }

    /// `trials` statistics of white-noise draws; trial `t` uses substream `t`.
    pub fn h0_statistics(&self, trials: usize, seed: u64) -> Vec<f64> {
        let s = self.sigma2.sqrt();
        self.statistics_with(trials, seed, |rng, w, y| {
            fill_standard_normal(rng, w);
            y.iter_mut().zip(w.iter()).for_each(|(o, x)| *o = s * x);
        })
    }

    /// `trials` statistics of draws from `truth`.
    pub fn statistics_under(&self, truth: &ToeplitzGaussian, trials: usize, seed: u64) -> Vec<f64> {
        self.statistics_with(trials, seed, |rng, w, y| truth.draw(rng, w, y))
    }

    /// `trials` statistics of draws from the mixture `sum_k r_k models[k]`.
    pub fn statistics_under_mixture(
        &self,
        models: &[ToeplitzGaussian],
        r: &MixtureWeights,
        trials: usize,
        seed: u64,
    ) -> Vec<f64> {
        self.statistics_with(trials, seed, |rng, w, y| {
            let k = r.pick(rng.random::<f64>());
            models[k].draw(rng, w, y);
        })
    }

    fn statistics_with<F>(&self, trials: usize, seed: u64, draw: F) -> Vec<f64>
    where
        F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64], &mut [f64]) + Sync + Send,
    {
        let streams = Substreams::new(seed);
        parallel::map_indexed(trials, |t| {
            let mut rng = streams.trial(t as u64);
            let mut w = vec![0.0; self.n];
            let mut y = vec![0.0; self.n];
            draw(&mut rng, &mut w, &mut y);
            self.statistic(&y)
        })
    }
}

/// Free-standing `g_N(y; q)`.
pub fn mixture_statistic(
    y: &[f64],
    weights: &MixtureWeights,
    models: &[ToeplitzGaussian],
    null_sigma2: f64,
) -> Result<f64> {
    if weights.as_slice().iter().all(|w| *w == 0.0) {
        return Err(Error::argument("all mixture weights are zero"));
    }
    let det = Detector::new(weights.clone(), models.to_vec())?;
    if det.sigma2 != null_sigma2 {
        return Err(Error::argument("models were built for a different sigma2"));
    }
    if y.len() != det.n {
        return Err(Error::argument(format!(
            "observation has length {}, models have n = {}",
            y.len(),
            det.n
        )));
    }
    Ok(det.statistic(y))
}

/// A detector with its calibrated threshold.
#[derive(Clone, Debug)]
pub struct DetectorSpec {
    pub detector: Detector,
    pub threshold: f64,
    pub alpha: f64,
}

impl DetectorSpec {
    /// Rule: decide H0 iff `g <= threshold`.
    pub fn decides_h1(&self, g: f64) -> bool {
        g > self.threshold
    }
}

pub fn min_calibration_trials(alpha: f64) -> usize {
    (100.0 / alpha.min(1.0 - alpha)).ceil() as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter {
            field: "alpha",
            reason: format!("must lie in (0,1), got {alpha}"),
        });
    }
    Ok(())
}

/// Lower-interpolation `(1 - alpha)` order statistic of `stats`.
pub fn upper_quantile(stats: &[f64], alpha: f64) -> f64 {
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((1.0 - alpha) * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Empirical `(1 - alpha)` quantile of the statistic under white noise.
pub fn calibrate_threshold(detector: &Detector, alpha: f64, trials: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    let need = min_calibration_trials(alpha);
    if trials < need {
        return Err(Error::argument(format!(
            "calibration needs at least {need} trials for alpha = {alpha}, got {trials}"
        )));
    }
    Ok(upper_quantile(&detector.h0_statistics(trials, seed), alpha))
}

pub fn calibrate(detector: Detector, alpha: f64, trials: usize, seed: u64) -> Result<DetectorSpec> {
    let threshold = calibrate_threshold(&detector, alpha, trials, seed)?;
    Ok(DetectorSpec {
        detector,
        threshold,
        alpha,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbs {
    pub fa_hat: f64,
    pub miss_hat: f64,
    pub fa_count: u64,
    pub miss_count: u64,
    pub trials: usize,
}

/// Monte Carlo false-alarm and miss rates with `truth` generating H1.
/// H0 draws use the `h0` substream of `seed` and H1 draws the `h1` substream,
/// so detectors evaluated with the same seed score identical samples.
pub fn estimate_error_probs_under(
    spec: &DetectorSpec,
    truth: &ToeplitzGaussian,
    trials: usize,
    seed: u64,
) -> Result<ErrorProbs> {
    if trials < MIN_ESTIMATION_TRIALS {
        return Err(Error::argument(format!(
            "error-probability estimation needs at least {MIN_ESTIMATION_TRIALS} trials"
        )));
    }
    if truth.n() != spec.detector.n() {
        return Err(Error::argument("truth model dimension differs from detector"));
    }
    let h0 = spec.detector.h0_statistics(trials, derive_seed(seed, "h0", 0));
    let h1 = spec
        .detector
        .statistics_under(truth, trials, derive_seed(seed, "h1", 0));
    let fa_count = h0.iter().filter(|g| spec.decides_h1(**g)).count() as u64;
    let miss_count = h1.iter().filter(|g| !spec.decides_h1(**g)).count() as u64;
    Ok(ErrorProbs {
        fa_hat: fa_count as f64 / trials as f64,
        miss_hat: miss_count as f64 / trials as f64,
        fa_count,
        miss_count,
        trials,
    })
}

/// As [`estimate_error_probs_under`] with H1 drawn from `models[true_psd_index]`.
pub fn estimate_error_probs(
    spec: &DetectorSpec,
    true_psd_index: usize,
    trials: usize,
    seed: u64,
) -> Result<ErrorProbs> {
    let truth = spec
        .detector
        .models()
        .get(true_psd_index)
        .ok_or_else(|| Error::argument(format!("no model at index {true_psd_index}")))?
        .clone();
    estimate_error_probs_under(spec, &truth, trials, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub n_values: Vec<usize>,
    pub threshold: Vec<f64>,
    pub fa_hat: Vec<f64>,
    pub miss_hat: Vec<f64>,
    pub miss_count: Vec<u64>,
    /// `-(1/n) log miss_hat`; `inf` when no miss was observed.
    #[serde(with = "serde_float::vec")]
    pub miss_log: Vec<f64>,
    pub censored: Vec<bool>,
    /// `miss_log` at the largest uncensored `n`.
    pub slope: f64,
    /// 95% half-width of `slope` by the delta method.
    pub ci_half_width: f64,
}

/// Per-`n` calibration and miss estimation for the detector with weights
/// `detector_weights` over the members of `set`, with member
/// `true_psd_index` generating H1. Seeds depend on `(seed, n)` only, so
/// different detectors share samples.
#[allow(clippy::too_many_arguments)]
pub fn empirical_exponent(
    set: &UncertaintySet,
    detector_weights: &MixtureWeights,
    true_psd_index: usize,
    n_values: &[usize],
    trials: usize,
    alpha: f64,
    sigma2: f64,
    seed: u64,
) -> Result<ExponentEstimate> {
    check_alpha(alpha)?;
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("n_values must be nonempty and strictly increasing"));
    }
    if true_psd_index >= set.len() {
        return Err(Error::argument(format!("no member at index {true_psd_index}")));
    }
    let mut est = ExponentEstimate {
        n_values: n_values.to_vec(),
        threshold: Vec::new(),
        fa_hat: Vec::new(),
        miss_hat: Vec::new(),
        miss_count: Vec::new(),
        miss_log: Vec::new(),
        censored: Vec::new(),
        slope: f64::NAN,
        ci_half_width: f64::NAN,
    };
    for &n in n_values {
        let det = Detector::for_set(set, detector_weights.clone(), sigma2, n)?;
        let truth = build_model(set.member(true_psd_index), sigma2, n)?;
        let spec = calibrate(det, alpha, trials, derive_seed(seed, "calibrate", n as u64))?;
        let probs = estimate_error_probs_under(&spec, &truth, trials, derive_seed(seed, "estimate", n as u64))?;
        let censored = probs.miss_count < CENSOR_MIN_EVENTS;
        let miss_log = if probs.miss_count == 0 {
            f64::INFINITY
        } else {
            -probs.miss_hat.ln() / n as f64
        };
        if !censored {
            est.slope = miss_log;
            let p = probs.miss_hat;
            est.ci_half_width = Z_95 * ((1.0 - p) / (p * trials as f64)).sqrt() / n as f64;
        }
        est.threshold.push(spec.threshold);
        est.fa_hat.push(probs.fa_hat);
        est.miss_hat.push(probs.miss_hat);
        est.miss_count.push(probs.miss_count);
        est.miss_log.push(miss_log);
        est.censored.push(censored);
    }
    if est.censored.iter().all(|c| *c) {
        return Err(Error::EstimationInfeasible(format!(
            "every n has fewer than {CENSOR_MIN_EVENTS} misses in {trials} trials; \
             use smaller n or more trials"
        )));
    }
    Ok(est)
}

/// `sup_t [t tau - (1/N) log mean exp(t N g)]` over `tilt_grid` from
/// precomputed statistics `g` of draws from the H1 mixture.
pub fn chernoff_bracket_max(stats: &[f64], threshold: f64, n: usize, tilt_grid: &[f64]) -> Result<f64> {
    check_tilts(tilt_grid)?;
    let nf = n as f64;
    let mut best = f64::NEG_INFINITY;
    let mut scaled = vec![0.0; stats.len()];
    for &t in tilt_grid {
        scaled.iter_mut().zip(stats).for_each(|(s, g)| *s = t * nf * g);
        let bracket = if t == 0.0 {
            0.0
        } else {
            t * threshold - log_mean_exp(&scaled) / nf
        };
        best = best.max(bracket);
    }
    Ok(best)
}

pub(crate) fn check_tilts(tilt_grid: &[f64]) -> Result<()> {
    if tilt_grid.is_empty() {
        return Err(Error::argument("tilt grid must be nonempty"));
    }
    if let Some(t) = tilt_grid.iter().find(|t| !(**t <= 0.0)) {
        return Err(Error::argument(format!("tilt {t} is not <= 0")));
    }
    Ok(())
}

/// Chernoff lower bound on the miss exponent with H1 drawn from the mixture
/// `true_model_weights` over the detector's models.
pub fn chernoff_exponent(
    spec: &DetectorSpec,
    true_model_weights: &MixtureWeights,
    tilt_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_tilts(tilt_grid)?;
    if true_model_weights.len() != spec.detector.models().len() {
        return Err(Error::argument("true-model weights do not match detector models"));
    }
    let stats = spec.detector.statistics_under_mixture(
        spec.detector.models(),
        true_model_weights,
        trials,
        seed,
    );
    chernoff_bracket_max(&stats, spec.threshold, spec.detector.n(), tilt_grid)
}

/// `count` uniformly spaced tilts on `[lo, 0]`.
pub fn tilt_grid(lo: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (0.0 - lo) * i as f64 / (count - 1) as f64)
        .collect()
}
