//! The robustness game: sample-average mixture KL minimisation over the
//! simplex, closed-form KKT certificates for singleton solutions, the utility
//! function, and the regular-pair probe.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{check_tilts, log_sum_exp, MixtureWeights};
use crate::error::{Error, Result};
use crate::gaussian_model::{fill_standard_normal, ratio_expectation, SampleMatrix, ToeplitzGaussian};
use crate::parallel;
use crate::rng::Substreams;
use crate::serde_float;

/// Tolerance on `max_violation` for a singleton to count as verified.
pub const KKT_TOLERANCE: f64 = 1e-10;
const MONOTONE_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

fn check_models(models: &[ToeplitzGaussian]) -> Result<(usize, f64)> {
    let first = models
        .first()
        .ok_or_else(|| Error::argument("at least one model is required"))?;
    let (n, s2) = (first.n(), first.sigma2());
    if models.iter().any(|m| m.n() != n || m.sigma2() != s2) {
        return Err(Error::argument("models must share n and sigma2"));
    }
    Ok((n, s2))
}

fn mixture_log_lr(log_r: &[f64], llr: &[f64]) -> f64 {
    log_sum_exp(
        log_r
            .iter()
            .zip(llr)
            .filter(|(lr, _)| lr.is_finite())
            .map(|(lr, l)| lr + l),
    )
}

/// Log-likelihood ratios `l_k(y_s)` of every frozen white-noise sample against
/// every model, stored row-major `samples x K`.
#[derive(Clone, Debug)]
pub struct LlrTable {
    n: usize,
    k: usize,
    llr: Vec<f64>,
}

impl LlrTable {
    pub fn new(models: &[ToeplitzGaussian], null_sigma2: f64, h0: &SampleMatrix) -> Result<Self> {
        let (n, s2) = check_models(models)?;
        if s2 != null_sigma2 {
            return Err(Error::argument("models were built for a different sigma2"));
        }
        if h0.n() != n {
            return Err(Error::argument("sample dimension differs from models"));
        }
        let k = models.len();
        let rows = parallel::map_indexed(h0.trials(), |s| {
            let y = h0.row(s);
            models.iter().map(|m| m.log_lr(y)).collect::<Vec<f64>>()
        });
        Ok(Self {
            n,
            k,
            llr: rows.concat(),
        })
    }

    /// Table over `samples` fresh white-noise draws from `seed`.
    pub fn frozen(models: &[ToeplitzGaussian], samples: usize, seed: u64) -> Result<Self> {
        let (n, s2) = check_models(models)?;
        let white = ToeplitzGaussian::white(n, s2)?;
        let h0 = crate::gaussian_model::sample_gaussian(&white, samples, seed)?;
        Self::new(models, s2, &h0)
    }

    pub fn samples(&self) -> usize {
        self.llr.len() / self.k
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.llr[s * self.k..(s + 1) * self.k]
    }

    fn check_weights(&self, r: &MixtureWeights) -> Result<()> {
        if r.len() != self.k {
            return Err(Error::argument(format!(
                "{} weights for {} models",
                r.len(),
                self.k
            )));
        }
        Ok(())
    }

    /// Per-sample `-(1/N) log sum_k r_k p_k(y) / p_0(y)`.
    fn per_sample_kl(&self, r: &MixtureWeights) -> Vec<f64> {
        let log_r = r.log_weights();
        let nf = self.n as f64;
        (0..self.samples())
            .map(|s| -mixture_log_lr(&log_r, self.row(s)) / nf)
            .collect()
    }

    /// `(1/N)` times the sample-average of `log p_0 - log sum_k r_k p_k`.
    pub fn sample_average_kl(&self, r: &MixtureWeights) -> Result<f64> {
        self.check_weights(r)?;
        let v = self.per_sample_kl(r);
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Standard error of [`Self::sample_average_kl`] as an estimate of the
    /// population value.
    pub fn sample_average_kl_se(&self, r: &MixtureWeights) -> Result<f64> {
        self.check_weights(r)?;
        let v = self.per_sample_kl(r);
        Ok(mean_and_se(&v).1)
    }

    /// Gradient `-(1/N) mean[p_k / sum_j r_j p_j]` and objective value.
    pub fn gradient(&self, r: &MixtureWeights) -> Result<(Vec<f64>, f64)> {
        self.check_weights(r)?;
        let log_r = r.log_weights();
        let mut grad = vec![0.0; self.k];
        let mut value = 0.0;
        for s in 0..self.samples() {
            let row = self.row(s);
            let lse = mixture_log_lr(&log_r, row);
            value -= lse;
            for (g, l) in grad.iter_mut().zip(row) {
                *g -= (l - lse).exp();
            }
        }
        let scale = (self.n * self.samples()) as f64;
        grad.iter_mut().for_each(|g| *g /= scale);
        Ok((grad, value / scale))
    }

    /// H0 sample mean of `g_N(y; q)`, with its per-sample values.
    fn statistic_values(&self, q: &MixtureWeights) -> Vec<f64> {
        let log_q = q.log_weights();
        let nf = self.n as f64;
        (0..self.samples())
            .map(|s| mixture_log_lr(&log_q, self.row(s)) / nf)
            .collect()
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `sample_average_kl` over a frozen H0 sample matrix.
pub fn sample_average_kl(
    r: &MixtureWeights,
    models: &[ToeplitzGaussian],
    null_sigma2: f64,
    h0_samples: &SampleMatrix,
) -> Result<f64> {
    LlrTable::new(models, null_sigma2, h0_samples)?.sample_average_kl(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrankWolfeStep {
    pub iter: usize,
    pub value: f64,
    pub gap: f64,
    pub step: f64,
    pub vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptimum {
    pub r_star: MixtureWeights,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<FrankWolfeStep>,
}

/// Frank-Wolfe with step `2/(t+2)`, halved while the objective would increase.
pub fn minimize_mixture_weights(
    table: &LlrTable,
    init: &MixtureWeights,
    max_iters: usize,
    tol: f64,
) -> Result<MixtureOptimum> {
    table.check_weights(init)?;
    let k = table.components();
    if init.as_slice().iter().any(|w| *w < 1.0 / (10.0 * k as f64)) {
        return Err(Error::argument("initial weights must all be >= 1/(10K)"));
    }
    let mut r = init.clone();
    let (mut grad, mut value) = table.gradient(&r)?;
    let mut trace = Vec::new();
    let mut gap = 0.0;
    for iter in 0..max_iters {
        if !value.is_finite() {
            return Err(Error::Numerical(format!("objective became {value}")));
        }
        let vertex = argmin(&grad);
        gap = r
            .as_slice()
            .iter()
            .zip(&grad)
            .map(|(w, g)| w * g)
            .sum::<f64>()
            - grad[vertex];
        if k == 1 || gap <= tol {
            trace.push(FrankWolfeStep { iter, value, gap, step: 0.0, vertex });
            return Ok(MixtureOptimum { r_star: r, value, gap, iterations: iter, trace });
        }
        let target = MixtureWeights::vertex(k, vertex);
        let mut step = 2.0 / (iter as f64 + 2.0);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = MixtureWeights::blend(&target, &r, step)?;
            let (g, v) = table.gradient(&cand)?;
            if v <= value + MONOTONE_SLACK {
                accepted = Some((cand, g, v));
                break;
            }
            step *= 0.5;
        }
        trace.push(FrankWolfeStep { iter, value, gap, step, vertex });
        let Some((cand, g, v)) = accepted else {
            return Ok(MixtureOptimum { r_star: r, value, gap, iterations: iter + 1, trace });
        };
        r = cand;
        grad = g;
        value = v;
    }
    Ok(MixtureOptimum { r_star: r, value, gap, iterations: max_iters, trace })
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x < xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub candidate_index: usize,
    pub lambda: f64,
    /// `(1 - E_k) / n`; negative entries mark violated constraints.
    #[serde(with = "serde_float::vec")]
    pub mu: Vec<f64>,
    /// Closed-form `E_{p_0}[p_k / p_candidate]` per model.
    #[serde(with = "serde_float::vec")]
    pub ratio_expectations: Vec<f64>,
    #[serde(with = "serde_float")]
    pub max_violation: f64,
    pub singleton_verified: bool,
    pub offending_index: Option<usize>,
}

/// Check the optimality conditions of the vertex `candidate_index` in closed form.
pub fn kkt_certificate(
    candidate_index: usize,
    models: &[ToeplitzGaussian],
    null_sigma2: f64,
) -> Result<KktCertificate> {
    let (n, _) = check_models(models)?;
    let cand = models
        .get(candidate_index)
        .ok_or_else(|| Error::argument(format!("no model at index {candidate_index}")))?;
    let nf = n as f64;
    let mut mu = vec![0.0; models.len()];
    let mut ratios = vec![1.0; models.len()];
    let mut max_violation: f64 = 0.0;
    let mut offending = None;
    for (k, m) in models.iter().enumerate() {
        if k == candidate_index {
            continue;
        }
        let e = ratio_expectation(null_sigma2, cand, m)?.value;
        ratios[k] = e;
        mu[k] = (1.0 - e) / nf;
        if e - 1.0 > max_violation {
            max_violation = e - 1.0;
            offending = Some(k);
        }
    }
    let singleton_verified = max_violation <= KKT_TOLERANCE;
    Ok(KktCertificate {
        candidate_index,
        lambda: 1.0 / nf,
        mu,
        ratio_expectations: ratios,
        max_violation,
        singleton_verified,
        offending_index: if singleton_verified { None } else { offending },
    })
}

/// Draws from every model under common random numbers: trial `t` holds a
/// uniform `u_t` used to pick a mixture component and, for each component
/// `k`, the log-likelihood ratios of `L_k w_t` against every model.
#[derive(Clone, Debug)]
pub struct MixtureBank {
    n: usize,
    k: usize,
    u: Vec<f64>,
    llr: Vec<f64>,
}

impl MixtureBank {
    pub fn new(models: &[ToeplitzGaussian], trials: usize, seed: u64) -> Result<Self> {
        let (n, _) = check_models(models)?;
        if trials == 0 {
            return Err(Error::argument("trials must be >= 1"));
        }
        let k = models.len();
        let streams = Substreams::new(seed);
        let rows = parallel::map_indexed(trials, |t| {
            let mut rng = streams.trial(t as u64);
            let u = rng.random::<f64>();
            let mut w = vec![0.0; n];
            let mut y = vec![0.0; n];
            fill_standard_normal(&mut rng, &mut w);
            let mut out = Vec::with_capacity(k * k);
            for src in models {
                src.color(&w, &mut y);
                out.extend(models.iter().map(|m| m.log_lr(&y)));
            }
            (u, out)
        });
        let (u, llr): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        Ok(Self {
            n,
            k,
            u,
            llr: llr.concat(),
        })
    }

    pub fn trials(&self) -> usize {
        self.u.len()
    }

    /// LLR vector of trial `t` when the mixture `r` generated it.
    fn row(&self, t: usize, r: &MixtureWeights) -> &[f64] {
        let src = r.pick(self.u[t]);
        let base = (t * self.k + src) * self.k;
        &self.llr[base..base + self.k]
    }

    /// `g_N(y_t; q)` for every trial drawn from mixture `r`.
    fn statistic_values(&self, q: &MixtureWeights, r: &MixtureWeights) -> Vec<f64> {
        let log_q = q.log_weights();
        let nf = self.n as f64;
        (0..self.trials())
            .map(|t| mixture_log_lr(&log_q, self.row(t, r)) / nf)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub value: f64,
    /// Maximising normalised tilt.
    pub tilt: f64,
}

/// Frozen H0 table plus a common-random-number H1 bank: everything needed to
/// evaluate `U_N(q, r)` deterministically for many `(q, r)`.
#[derive(Clone, Debug)]
pub struct Game {
    h0: LlrTable,
    bank: MixtureBank,
    tilts: Vec<f64>,
}

struct Bracket {
    value: f64,
    tilt: f64,
    h0_g: Vec<f64>,
    h1_scaled: Vec<f64>,
}

impl Game {
    pub fn new(h0: LlrTable, bank: MixtureBank, tilt_grid: Vec<f64>) -> Result<Self> {
        check_tilts(&tilt_grid)?;
        if h0.k != bank.k || h0.n != bank.n {
            return Err(Error::argument("H0 table and H1 bank disagree on models"));
        }
        Ok(Self {
            h0,
            bank,
            tilts: tilt_grid,
        })
    }

    pub fn h0(&self) -> &LlrTable {
        &self.h0
    }

    fn bracket(&self, q: &MixtureWeights, r: &MixtureWeights) -> Result<Bracket> {
        self.h0.check_weights(q)?;
        self.h0.check_weights(r)?;
        let nf = self.h0.n as f64;
        let h0_g = self.h0.statistic_values(q);
        let h0_mean = h0_g.iter().sum::<f64>() / h0_g.len() as f64;
        let h1_g = self.bank.statistic_values(q, r);
        let mut best = Bracket {
            value: f64::NEG_INFINITY,
            tilt: 0.0,
            h0_g: Vec::new(),
            h1_scaled: Vec::new(),
        };
        let mut scaled = vec![0.0; h1_g.len()];
        for &t in &self.tilts {
            scaled.iter_mut().zip(&h1_g).for_each(|(s, g)| *s = t * nf * g);
            let value = if t == 0.0 {
                0.0
            } else {
                t * h0_mean - crate::detection::log_mean_exp(&scaled) / nf
            };
            if value > best.value {
                best.value = value;
                best.tilt = t;
                best.h1_scaled.clone_from(&scaled);
            }
        }
        best.h0_g = h0_g;
        Ok(best)
    }

    /// `U_N(q, r) = sup_t [t E_0 g_q - (1/N) log E_r exp(t N g_q)]`.
    pub fn utility(&self, q: &MixtureWeights, r: &MixtureWeights) -> Result<UtilityEstimate> {
        let b = self.bracket(q, r)?;
        Ok(UtilityEstimate {
            value: b.value,
            tilt: b.tilt,
        })
    }

    /// Utility with its delta-method standard error at the maximising tilt.
    pub fn utility_with_se(&self, q: &MixtureWeights, r: &MixtureWeights) -> Result<(UtilityEstimate, f64)> {
        let b = self.bracket(q, r)?;
        let se = self.difference_se(&b, None);
        Ok((
            UtilityEstimate {
                value: b.value,
                tilt: b.tilt,
            },
            se,
        ))
    }

    /// Delta-method standard error of `a - b` (or of `a` alone).
    fn difference_se(&self, a: &Bracket, b: Option<&Bracket>) -> f64 {
        let nf = self.h0.n as f64;
        let h0_terms: Vec<f64> = match b {
            Some(b) => a
                .h0_g
                .iter()
                .zip(&b.h0_g)
                .map(|(x, y)| a.tilt * x - b.tilt * y)
                .collect(),
            None => a.h0_g.iter().map(|x| a.tilt * x).collect(),
        };
        let influence = |br: &Bracket| -> Vec<f64> {
            let m = br.h1_scaled.iter().fold(f64::NEG_INFINITY, |x, y| x.max(*y));
            let e: Vec<f64> = br.h1_scaled.iter().map(|s| (s - m).exp()).collect();
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            e.iter().map(|x| -x / (mean * nf)).collect()
        };
        let h1_terms: Vec<f64> = match b {
            Some(b) => influence(a)
                .iter()
                .zip(influence(b))
                .map(|(x, y)| x - y)
                .collect(),
            None => influence(a),
        };
        let (_, se0) = mean_and_se(&h0_terms);
        let (_, se1) = mean_and_se(&h1_terms);
        (se0 * se0 + se1 * se1).sqrt()
    }

    /// `U_N(q, r)` with `E_r` replaced by the frozen H0 samples weighted by
    /// `p_r / p_0`. Both expectations then share one empirical measure, so
    /// the responder `q = r` attains the supremum at `t = -1` exactly.
    fn weighted_bracket(&self, q: &MixtureWeights, r: &MixtureWeights) -> (f64, Vec<f64>) {
        let nf = self.h0.n as f64;
        let gq = self.h0.statistic_values(q);
        let gr = self.h0.statistic_values(r);
        let mean_q = gq.iter().sum::<f64>() / gq.len() as f64;
        let mut h = vec![0.0; gq.len()];
        let mut best = (f64::NEG_INFINITY, 0.0, Vec::new());
        for &t in &self.tilts {
            h.iter_mut()
                .zip(gq.iter().zip(&gr))
                .for_each(|(h, (a, b))| *h = nf * (b + t * a));
            let value = if t == 0.0 {
                0.0
            } else {
                t * mean_q - crate::detection::log_mean_exp(&h) / nf
            };
            if value > best.0 {
                best = (value, t, h.clone());
            }
        }
        let (value, t, h) = best;
        if t == 0.0 {
            return (0.0, vec![0.0; gq.len()]);
        }
        let m = h.iter().fold(f64::NEG_INFINITY, |x, y| x.max(*y));
        let e: Vec<f64> = h.iter().map(|x| (x - m).exp()).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let influence = gq
            .iter()
            .zip(&e)
            .map(|(g, x)| t * g - x / (mean * nf))
            .collect();
        (value, influence)
    }

    /// `gap(beta) = U(r_b, r_b) - U(r_star, r_b)` with
    /// `r_b = (1 - beta) r_star + beta r_dir`, evaluated on the frozen H0
    /// samples (importance weighted) so every rung shares the same draws.
    /// `sampled_gap` repeats the evaluation with the H1 bank.
    pub fn regularity_probe(
        &self,
        r_star: &MixtureWeights,
        r_dir: &MixtureWeights,
        beta_ladder: &[f64],
    ) -> Result<RegularityProbe> {
        if let Some(b) = beta_ladder.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::argument(format!("beta {b} is outside [0, 1]")));
        }
        self.h0.check_weights(r_star)?;
        self.h0.check_weights(r_dir)?;
        let mut points = Vec::with_capacity(beta_ladder.len());
        for &beta in beta_ladder {
            if beta == 0.0 || r_dir == r_star {
                points.push(ProbePoint {
                    beta,
                    gap: 0.0,
                    se: 0.0,
                    sampled_gap: 0.0,
                });
                continue;
            }
            let r_beta = MixtureWeights::blend(r_dir, r_star, beta)?;
            let (resp, infl_resp) = self.weighted_bracket(&r_beta, &r_beta);
            let (fixed, infl_fixed) = self.weighted_bracket(r_star, &r_beta);
            let diff: Vec<f64> = infl_resp.iter().zip(&infl_fixed).map(|(a, b)| a - b).collect();
            let sampled = self.bracket(&r_beta, &r_beta)?.value - self.bracket(r_star, &r_beta)?.value;
            points.push(ProbePoint {
                beta,
                gap: resp - fixed,
                se: mean_and_se(&diff).1,
                sampled_gap: sampled,
            });
        }
        Ok(RegularityProbe {
            points,
            linear_coefficient: self.linear_coefficient(r_star, r_dir)?,
        })
    }

    /// `1 - E_0[p_{r_dir} / p_{r_star}]`, the first-order change of the
    /// mixture KL along `r_dir` (scaled by `1/N`), on the frozen H0 samples.
    pub fn linear_coefficient(&self, r_star: &MixtureWeights, r_dir: &MixtureWeights) -> Result<f64> {
        self.h0.check_weights(r_star)?;
        self.h0.check_weights(r_dir)?;
        let nf = self.h0.n as f64;
        let scaled: Vec<f64> = self
            .h0
            .statistic_values(r_dir)
            .iter()
            .zip(self.h0.statistic_values(r_star))
            .map(|(d, s)| nf * (d - s))
            .collect();
        Ok(1.0 - crate::detection::log_mean_exp(&scaled).exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub beta: f64,
    pub gap: f64,
    pub se: f64,
    /// Same gap with `E_r` estimated from the H1 bank instead.
    pub sampled_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub points: Vec<ProbePoint>,
    pub linear_coefficient: f64,
}

impl RegularityProbe {
    /// `gap / beta` down the ladder, skipping `beta = 0`.
    pub fn normalized_gaps(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.beta > 0.0)
            .map(|p| p.gap / p.beta)
            .collect()
    }
}
