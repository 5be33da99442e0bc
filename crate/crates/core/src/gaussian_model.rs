//! Finite-length Gaussian models `N(0, sigma2 I + Sigma_N)` where `Sigma_N` is
//! the Toeplitz covariance of a spectrum, together with exact KL divergences,
//! the closed-form density-ratio expectation used by the finite-N dominance
//! test, and reproducible sampling.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dominance::check_sigma2;
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::Substreams;
use crate::spectral::{autocovariance, PsdGrid};

const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];
const DOMINANCE_SLACK: f64 = 1e-10;
const MIDDLE_PIVOT_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
enum Factor {
    /// Covariance is `variance * I`.
    Diagonal { variance: f64 },
    /// Row-major lower Cholesky factor.
    Dense { lower: Vec<f64> },
}

/// Zero-mean Gaussian with covariance `sigma2 I + Toeplitz(autocov)`.
///
/// The Cholesky factor and log-determinant are computed once at construction.
#[derive(Clone, Debug)]
pub struct ToeplitzGaussian {
    label: String,
    n: usize,
    sigma2: f64,
    autocov: Vec<f64>,
    factor: Factor,
    logdet: f64,
    jitter: f64,
}

impl ToeplitzGaussian {
    /// Model for a length-`n` segment of a process with spectrum `psd` in white
    /// noise of variance `sigma2`.
    pub fn from_psd(psd: &PsdGrid, sigma2: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("model dimension must be >= 1"));
        }
        Self::from_autocov(psd.label(), autocovariance(psd, n - 1), sigma2)
    }

    /// The noise-only model `N(0, sigma2 I)`.
    pub fn white(n: usize, sigma2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("model dimension must be >= 1"));
        }
        Self::from_autocov("white", vec![0.0; n], sigma2)
    }

    pub fn from_autocov(label: &str, autocov: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        let n = autocov.len();
        if n == 0 {
            return Err(Error::argument("model dimension must be >= 1"));
        }
        if autocov[1..].iter().all(|c| *c == 0.0) {
            let variance = sigma2 + autocov[0];
            if !(variance > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    label: label.to_string(),
                });
            }
            return Ok(Self {
                label: label.to_string(),
                n,
                sigma2,
                logdet: n as f64 * variance.ln(),
                autocov,
                factor: Factor::Diagonal { variance },
                jitter: 0.0,
            });
        }
        let cov = toeplitz_covariance(&autocov, sigma2);
        for jitter in JITTER_LADDER {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(m) {
                let l = chol.l();
                let mut lower = vec![0.0; n * n];
                let mut logdet = 0.0;
                for i in 0..n {
                    for j in 0..=i {
                        lower[i * n + j] = l[(i, j)];
                    }
                    logdet += 2.0 * l[(i, i)].ln();
                }
                return Ok(Self {
                    label: label.to_string(),
                    n,
                    sigma2,
                    autocov,
                    factor: Factor::Dense { lower },
                    logdet,
                    jitter,
                });
            }
        }
        Err(Error::NotPositiveDefinite {
            label: label.to_string(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn autocov(&self) -> &[f64] {
        &self.autocov
    }

    /// `log |sigma2 I + Sigma_N|`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.factor, Factor::Diagonal { .. })
    }

    fn same_covariance(&self, other: &Self) -> bool {
        self.sigma2 == other.sigma2 && self.autocov == other.autocov
    }

    /// Dense covariance `sigma2 I + Sigma_N`.
    pub fn covariance(&self) -> DMatrix<f64> {
        toeplitz_covariance(&self.autocov, self.sigma2)
    }

    /// Dense lower Cholesky factor.
    pub fn lower_factor(&self) -> DMatrix<f64> {
        let n = self.n;
        match &self.factor {
            Factor::Diagonal { variance } => DMatrix::from_diagonal_element(n, n, variance.sqrt()),
            Factor::Dense { lower } => DMatrix::from_fn(n, n, |i, j| lower[i * n + j]),
        }
    }

    /// Solve `L z = b` in place, treating entries before `start` as zero.
    fn forward_solve(&self, b: &mut [f64], start: usize) {
        match &self.factor {
            Factor::Diagonal { variance } => {
                let s = variance.sqrt();
                b[start..].iter_mut().for_each(|x| *x /= s);
            }
            Factor::Dense { lower } => {
                let n = self.n;
                for i in start..n {
                    let row = &lower[i * n..i * n + i];
                    let dot: f64 = row[start..].iter().zip(&b[start..i]).map(|(l, z)| l * z).sum();
                    b[i] = (b[i] - dot) / lower[i * n + i];
                }
            }
        }
    }

    /// `y^T (sigma2 I + Sigma_N)^{-1} y`.
    pub fn inv_quad(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.n);
        match &self.factor {
            Factor::Diagonal { variance } => y.iter().map(|v| v * v).sum::<f64>() / variance,
            Factor::Dense { .. } => {
                let mut z = y.to_vec();
                self.forward_solve(&mut z, 0);
                z.iter().map(|v| v * v).sum()
            }
        }
    }

    /// `(1/2) log |I + Sigma_N / sigma2|`.
    pub fn half_logdet_snr(&self) -> f64 {
        0.5 * (self.logdet - self.n as f64 * self.sigma2.ln())
    }

    /// Log-likelihood ratio `log p(y) - log p0(y)` against `N(0, sigma2 I)`.
    pub fn log_lr(&self, y: &[f64]) -> f64 {
        let energy: f64 = y.iter().map(|v| v * v).sum();
        -self.half_logdet_snr() + 0.5 * energy / self.sigma2 - 0.5 * self.inv_quad(y)
    }

    /// Log density at `y`.
    pub fn log_pdf(&self, y: &[f64]) -> f64 {
        -0.5 * (self.n as f64 * (2.0 * std::f64::consts::PI).ln() + self.logdet + self.inv_quad(y))
    }

    /// Map standard normal `w` to a draw `y = L w`.
    pub fn color(&self, w: &[f64], y: &mut [f64]) {
        match &self.factor {
            Factor::Diagonal { variance } => {
                let s = variance.sqrt();
                y.iter_mut().zip(w).for_each(|(o, x)| *o = s * x);
            }
            Factor::Dense { lower } => {
                let n = self.n;
                for i in 0..n {
                    y[i] = lower[i * n..=i * n + i]
                        .iter()
                        .zip(&w[..=i])
                        .map(|(l, x)| l * x)
                        .sum();
                }
            }
        }
    }

    /// Draw one sample using `n` standard normals from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [f64], y: &mut [f64]) {
        fill_standard_normal(rng, w);
        self.color(w, y);
    }

    /// Dense inverse covariance.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut linv = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            self.forward_solve(&mut col, j);
            for i in j..n {
                linv[(i, j)] = col[i];
            }
        }
        let mut inv = linv.transpose() * &linv;
        symmetrize(&mut inv);
        inv
    }
}

pub(crate) fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, w: &mut [f64]) {
    w.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
}

fn toeplitz_covariance(autocov: &[f64], sigma2: f64) -> DMatrix<f64> {
    let n = autocov.len();
    DMatrix::from_fn(n, n, |i, j| {
        let c = autocov[i.abs_diff(j)];
        if i == j {
            c + sigma2
        } else {
            c
        }
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn build_model(psd: &PsdGrid, sigma2: f64, n: usize) -> Result<ToeplitzGaussian> {
    ToeplitzGaussian::from_psd(psd, sigma2, n)
}

fn check_dims(p: &ToeplitzGaussian, q: &ToeplitzGaussian) -> Result<()> {
    if p.n != q.n {
        return Err(Error::argument(format!(
            "dimension mismatch: {} vs {}",
            p.n, q.n
        )));
    }
    Ok(())
}

/// `D(p || q)` in nats.
pub fn gaussian_kl(p: &ToeplitzGaussian, q: &ToeplitzGaussian) -> Result<f64> {
    check_dims(p, q)?;
    if p.same_covariance(q) {
        return Ok(0.0);
    }
    let n = p.n as f64;
    if let (Factor::Diagonal { variance: vp }, Factor::Diagonal { variance: vq }) =
        (&p.factor, &q.factor)
    {
        let per_dim = 0.5 * (vp / vq - 1.0 + (vq / vp).ln());
        return Ok((n * per_dim).max(0.0));
    }
    // tr(Cq^{-1} Cp) = || Lq^{-1} Lp ||_F^2
    let lp = p.lower_factor();
    let trace: f64 = parallel::map_indexed(p.n, |j| {
        let mut col: Vec<f64> = lp.column(j).iter().copied().collect();
        q.forward_solve(&mut col, j);
        col[j..].iter().map(|v| v * v).sum::<f64>()
    })
    .iter()
    .sum();
    Ok((0.5 * (trace - n + q.logdet - p.logdet)).max(0.0))
}

/// Closed-form `E_{p0}[p2 / p1]` with `p0 = N(0, sigma2 I)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioExpectation {
    /// `+inf` when the defining integral diverges.
    pub value: f64,
    pub log_value: f64,
    /// `I + sigma2 (C2^{-1} - C1^{-1})` is not (numerically) positive definite.
    pub diverged: bool,
}

impl RatioExpectation {
    fn diverged() -> Self {
        Self {
            value: f64::INFINITY,
            log_value: f64::INFINITY,
            diverged: true,
        }
    }

    fn from_log(log_value: f64) -> Self {
        Self {
            value: log_value.exp(),
            log_value,
            diverged: false,
        }
    }

    /// Certifies `N(0, C1)` is dominated by `N(0, C2)` relative to the noise.
    pub fn dominates(&self) -> bool {
        !self.diverged && self.value <= 1.0 + DOMINANCE_SLACK
    }
}

/// `[ |C1| / (|C2| |I + sigma2 (C2^{-1} - C1^{-1})|) ]^{1/2}`.
pub fn ratio_expectation(
    p0_sigma2: f64,
    p1: &ToeplitzGaussian,
    p2: &ToeplitzGaussian,
) -> Result<RatioExpectation> {
    check_sigma2(p0_sigma2)?;
    check_dims(p1, p2)?;
    if p1.same_covariance(p2) {
        return Ok(RatioExpectation::from_log(0.0));
    }
    let s2 = p0_sigma2;
    if let (Factor::Diagonal { variance: v1 }, Factor::Diagonal { variance: v2 }) =
        (&p1.factor, &p2.factor)
    {
        let middle = 1.0 + s2 * (1.0 / v2 - 1.0 / v1);
        if middle < MIDDLE_PIVOT_FLOOR {
            return Ok(RatioExpectation::diverged());
        }
        let log_value = 0.5 * p1.n as f64 * (v1.ln() - v2.ln() - middle.ln());
        return Ok(RatioExpectation::from_log(log_value));
    }
    let n = p1.n;
    let mut middle = (p2.inverse() - p1.inverse()) * s2;
    for i in 0..n {
        middle[(i, i)] += 1.0;
    }
    symmetrize(&mut middle);
    let Some(chol) = Cholesky::new(middle) else {
        return Ok(RatioExpectation::diverged());
    };
    let l = chol.l();
    let mut logdet_middle = 0.0;
    for i in 0..n {
        let pivot = l[(i, i)];
        if pivot * pivot < MIDDLE_PIVOT_FLOOR {
            return Ok(RatioExpectation::diverged());
        }
        logdet_middle += 2.0 * pivot.ln();
    }
    Ok(RatioExpectation::from_log(
        0.5 * (p1.logdet - p2.logdet - logdet_middle),
    ))
}

/// Finite-N dominance of `p1` by `p2` relative to white noise `p0_sigma2`.
pub fn finite_n_dominates(
    p0_sigma2: f64,
    p1: &ToeplitzGaussian,
    p2: &ToeplitzGaussian,
) -> Result<bool> {
    Ok(ratio_expectation(p0_sigma2, p1, p2)?.dominates())
}

/// Row-major `trials x n` matrix of draws.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    trials: usize,
    n: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n)
    }
}

/// `trials` i.i.d. draws; trial `t` uses `n` normals from substream `t` of
/// `seed`, so the output does not depend on thread scheduling.
pub fn sample_gaussian(model: &ToeplitzGaussian, trials: usize, seed: u64) -> Result<SampleMatrix> {
    if trials == 0 {
        return Err(Error::argument("trials must be >= 1"));
    }
    let n = model.n;
    let streams = Substreams::new(seed);
    let mut data = vec![0.0; trials * n];
    parallel::fill_rows(&mut data, n, |t, row| {
        let mut rng = streams.trial(t as u64);
        let mut w = vec![0.0; n];
        model.draw(&mut rng, &mut w, row);
    });
    Ok(SampleMatrix { trials, n, data })
}
