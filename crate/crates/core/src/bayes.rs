//! Bayesian posterior sampling with a normal-inverse-gamma prior on
//! `(theta1, theta2)` and a uniform prior on `b` over `(-2, 0)`.
//!
//! Each iteration refreshes every latent site, then draws `b` from its
//! marginal given `Z` (with `theta1, theta2` integrated out), `theta2` given
//! `(b, Z)` and finally `theta1` given `(theta2, b, Z)`. The three parameter
//! conditionals only touch the five sums in [`ArSuffStats`], so their cost does
//! not grow with the series length.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ar1::{ArQuadForms, ArSuffStats};
use crate::error::{Error, Result};
use crate::latent::{sir_initialize, sweep_in_place, SiteKernel, SIR_DRAWS};
use crate::mcem::method_of_moments;
use crate::model::{LatentTrajectory, ModelParams, ObservedSeries};
use crate::optimize::grid_then_golden;
use crate::scalar::Scalar;

/// Rejections tolerated by [`sample_b`] before the bound is considered broken.
pub const MAX_B_ATTEMPTS: u64 = 1_000_000;

/// Hyperparameters: `theta2 ~ InvGamma(phi1, phi2)`, `theta1 | theta2 ~ N(eta1, eta2 theta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, bound(deserialize = "F: Scalar + serde::Deserialize<'de>"))]
pub struct PriorHyper<F> {
    pub phi1: F,
    pub phi2: F,
    pub eta1: F,
    pub eta2: F,
}

impl<F: Scalar> Default for PriorHyper<F> {
    fn default() -> Self {
        Self { phi1: F::c(0.1), phi2: F::c(0.1), eta1: F::zero(), eta2: F::c(100.0) }
    }
}

impl<F: Scalar> PriorHyper<F> {
    pub fn new(phi1: F, phi2: F, eta1: F, eta2: F) -> Result<Self> {
        let prior = Self { phi1, phi2, eta1, eta2 };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: F| v > F::zero() && v.is_finite();
        if !positive(self.phi1) || !positive(self.phi2) || !positive(self.eta2) || !self.eta1.is_finite() {
            return Err(Error::InvalidParams(format!(
                "prior requires phi1, phi2, eta2 > 0 (got {}, {}, {})",
                self.phi1, self.phi2, self.eta2
            )));
        }
        Ok(())
    }
}

/// Sufficient statistics of `W = Z - eta1` for the parameter updates.
pub type BSuffStats<F> = ArSuffStats<F>;

pub fn b_suff_stats<F: Scalar>(z: &LatentTrajectory<F>, prior: &PriorHyper<F>) -> Result<BSuffStats<F>> {
    ArSuffStats::from_slice(z.as_slice(), prior.eta1)
}

/// `W' B^-1 W`, `W' B^-1 1`, `1' B^-1 1` and `log det B` at lag coefficient `r`.
pub fn ar1_quadratic_forms<F: Scalar>(stats: &BSuffStats<F>, r: F) -> Result<ArQuadForms<F>> {
    stats.quad_forms(r)
}

/// `W' (eta2 1 1' + B)^-1 W` by Sherman-Morrison.
pub fn sherman_morrison_form<F: Scalar>(q: &ArQuadForms<F>, eta2: F) -> F {
    q.wbw - eta2 * q.wb1 * q.wb1 / (F::one() + eta2 * q.oneb1)
}

fn r_of_b<F: Scalar>(b: F) -> Result<F> {
    if !(b > -F::c(2.0) && b < F::zero()) {
        return Err(Error::InvalidParams(format!("b = {b} must lie in (-2, 0)")));
    }
    Ok(F::one() + b)
}

/// Shape and scale of `theta2 | b, Z`.
pub fn theta2_conditional<F: Scalar>(b: F, stats: &BSuffStats<F>, prior: &PriorHyper<F>) -> Result<(F, F)> {
    let q = stats.quad_forms(r_of_b(b)?)?;
    let shape = prior.phi1 + F::from_usize_lossy(stats.len) / F::c(2.0);
    let scale = prior.phi2 + sherman_morrison_form(&q, prior.eta2) / F::c(2.0);
    if !(scale > F::zero()) || !scale.is_finite() {
        return Err(Error::InvalidParams(format!("inverse-gamma scale {scale} is not positive")));
    }
    Ok((shape, scale))
}

pub fn sample_theta2_from_stats<F: Scalar, R: Rng + ?Sized>(
    b: F,
    stats: &BSuffStats<F>,
    prior: &PriorHyper<F>,
    rng: &mut R,
) -> Result<F> {
    let (shape, scale) = theta2_conditional(b, stats, prior)?;
    let g = F::gamma(shape, F::one() / scale, rng)
        .ok_or_else(|| Error::InvalidParams(format!("gamma({shape}, {scale})")))?;
    Ok(F::one() / g)
}

/// Exact inverse-gamma draw of `theta2 | b, Z`.
pub fn sample_theta2<F: Scalar, R: Rng + ?Sized>(
    b: F,
    z: &LatentTrajectory<F>,
    prior: &PriorHyper<F>,
    rng: &mut R,
) -> Result<F> {
    sample_theta2_from_stats(b, &b_suff_stats(z, prior)?, prior, rng)
}

/// Mean and variance of `theta1 | theta2, b, Z`.
pub fn theta1_conditional<F: Scalar>(
    theta2: F,
    b: F,
    stats: &BSuffStats<F>,
    prior: &PriorHyper<F>,
) -> Result<(F, F)> {
    if !(theta2 > F::zero()) {
        return Err(Error::InvalidParams(format!("theta2 = {theta2} must be positive")));
    }
    let q = stats.quad_forms(r_of_b(b)?)?;
    // Statistics are taken about eta1, so 1' B^-1 Z = W' B^-1 1 + eta1 1' B^-1 1.
    let one_b_z = q.wb1 + prior.eta1 * q.oneb1;
    let denom = F::one() + prior.eta2 * q.oneb1;
    Ok(((prior.eta1 + prior.eta2 * one_b_z) / denom, prior.eta2 * theta2 / denom))
}

pub fn sample_theta1_from_stats<F: Scalar, R: Rng + ?Sized>(
    theta2: F,
    b: F,
    stats: &BSuffStats<F>,
    prior: &PriorHyper<F>,
    rng: &mut R,
) -> Result<F> {
    let (mean, var) = theta1_conditional(theta2, b, stats, prior)?;
    Ok(mean + var.sqrt() * F::std_normal(rng))
}

/// Exact normal draw of `theta1 | theta2, b, Z`.
pub fn sample_theta1<F: Scalar, R: Rng + ?Sized>(
    theta2: F,
    b: F,
    z: &LatentTrajectory<F>,
    prior: &PriorHyper<F>,
    rng: &mut R,
) -> Result<F> {
    sample_theta1_from_stats(theta2, b, &b_suff_stats(z, prior)?, prior, rng)
}

/// `log pi(Z | b)` up to an additive constant free of `b` and `Z`:
/// `-1/2 log det B - 1/2 log(1 + eta2 1'B^-1 1) - (phi1 + T/2) log(1 + q / (2 phi2))`
/// with `q = W' (eta2 1 1' + B)^-1 W`.
pub fn log_marginal_b<F: Scalar>(b: F, stats: &BSuffStats<F>, prior: &PriorHyper<F>) -> Result<F> {
    let q = stats.quad_forms(r_of_b(b)?)?;
    Ok(log_marginal_from_forms(&q, stats.len, prior))
}

fn log_marginal_from_forms<F: Scalar>(q: &ArQuadForms<F>, len: usize, prior: &PriorHyper<F>) -> F {
    let half = F::c(0.5);
    let quad = sherman_morrison_form(q, prior.eta2);
    let exponent = prior.phi1 + F::from_usize_lossy(len) * half;
    -half * q.logdet_b - half * (prior.eta2 * q.oneb1).ln_1p() - exponent * (quad / (F::c(2.0) * prior.phi2)).ln_1p()
}

/// Location and height of the maximum of [`log_marginal_b`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BMaximum<F> {
    pub b_star: F,
    pub log_bound: F,
}

const B_GRID_STEP: f64 = 0.01;
const B_EDGE: f64 = 1e-9;

/// Grid search over `b = -1.99, -1.98, ..., -0.01` followed by golden-section
/// refinement in the neighbouring grid cells.
pub fn maximize_log_marginal_b<F: Scalar>(stats: &BSuffStats<F>, prior: &PriorHyper<F>) -> Result<BMaximum<F>> {
    stats.quad_forms(F::zero())?;
    let f = |b: F| log_marginal_b(b, stats, prior).unwrap_or(F::neg_infinity());
    let grid = (1..200).map(|i| F::c(-2.0 + B_GRID_STEP * i as f64));
    let bounds = (F::c(-2.0 + B_EDGE), F::c(-B_EDGE));
    let (b_star, log_bound) = grid_then_golden(f, grid, F::c(B_GRID_STEP), bounds, F::c(1e-9));
    if !log_bound.is_finite() {
        return Err(Error::Optimizer(format!("marginal of b is not finite at its maximum ({log_bound})")));
    }
    Ok(BMaximum { b_star, log_bound })
}

/// Draws `b | Z` by accept-reject from the uniform prior; also returns the
/// number of proposals used.
pub fn sample_b_counted<F: Scalar, R: Rng + ?Sized>(
    stats: &BSuffStats<F>,
    prior: &PriorHyper<F>,
    rng: &mut R,
) -> Result<(F, u64)> {
    let max = maximize_log_marginal_b(stats, prior)?;
    let two = F::c(2.0);
    for attempt in 1..=MAX_B_ATTEMPTS {
        // Uniform on the open interval (-2, 0).
        let mut u = F::unit_uniform(rng);
        while u == F::zero() {
            u = F::unit_uniform(rng);
        }
        let b = -two * u;
        let log_accept = log_marginal_b(b, stats, prior)? - max.log_bound;
        if F::unit_uniform(rng).ln() <= log_accept {
            return Ok((b, attempt));
        }
    }
    Err(Error::EnvelopeFailure { attempts: MAX_B_ATTEMPTS, context: "marginal of b" })
}

pub fn sample_b<F: Scalar, R: Rng + ?Sized>(stats: &BSuffStats<F>, prior: &PriorHyper<F>, rng: &mut R) -> Result<F> {
    sample_b_counted(stats, prior, rng).map(|(b, _)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GibbsConfig {
    /// Retained iterations.
    pub iterations: usize,
    pub burn_in: usize,
    /// Importance draws used to initialize the latent trajectory.
    pub sir_draws: usize,
    /// Keep every retained latent trajectory in the chain.
    pub keep_latent: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { iterations: 10_000, burn_in: 1_000, sir_draws: SIR_DRAWS, keep_latent: false }
    }
}

/// Retained posterior draws.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorChain<F> {
    pub theta1: Vec<F>,
    pub theta2: Vec<F>,
    pub b: Vec<F>,
    #[serde(skip)]
    pub latent: Option<Vec<LatentTrajectory<F>>>,
    pub burn_in: usize,
    pub seed: Option<u64>,
    pub wall_time: Duration,
    /// Proposals spent on `b` per retained iteration, on average.
    pub b_attempts_mean: f64,
}

impl<F: Scalar> PosteriorChain<F> {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Columns in the order `(theta1, theta2, b)`.
    pub fn columns(&self) -> [&[F]; 3] {
        [&self.theta1, &self.theta2, &self.b]
    }
}

/// Runs the Gibbs sampler. The chain starts from the method-of-moments
/// estimate with a sampling-importance-resampling latent trajectory.
pub fn gibbs_fit<F: Scalar, R: Rng + ?Sized>(
    n_star: &ObservedSeries,
    prior: &PriorHyper<F>,
    cfg: &GibbsConfig,
    rng: &mut R,
) -> Result<PosteriorChain<F>> {
    prior.validate()?;
    let start = Instant::now();
    let counts = n_star.counts();
    let init = method_of_moments::<F>(n_star).map_err(|e| Error::Initialization(Box::new(e)))?;
    let mut z = sir_initialize(n_star, &init, cfg.sir_draws, rng)
        .map_err(|e| Error::Initialization(Box::new(e)))?
        .into_vec();
    let (mut theta1, mut theta2, mut b) = (init.theta1(), init.theta2(), init.b());

    let n = cfg.iterations;
    let mut chain = PosteriorChain {
        theta1: Vec::with_capacity(n),
        theta2: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        latent: cfg.keep_latent.then(|| Vec::with_capacity(n)),
        burn_in: cfg.burn_in,
        seed: None,
        wall_time: Duration::ZERO,
        b_attempts_mean: 0.0,
    };
    let mut b_attempts = 0u64;
    for it in 0..cfg.burn_in + n {
        let params = ModelParams::new(theta1, theta2, b)?;
        sweep_in_place(&mut z, counts, &SiteKernel::new(&params), rng)?;
        let stats = ArSuffStats::from_slice(&z, prior.eta1)?;
        let (b_new, used) = sample_b_counted(&stats, prior, rng)?;
        b = b_new;
        theta2 = sample_theta2_from_stats(b, &stats, prior, rng)?;
        theta1 = sample_theta1_from_stats(theta2, b, &stats, prior, rng)?;
        if it >= cfg.burn_in {
            b_attempts += used;
            chain.theta1.push(theta1);
            chain.theta2.push(theta2);
            chain.b.push(b);
            if let Some(bank) = chain.latent.as_mut() {
                bank.push(LatentTrajectory::new(z.clone())?);
            }
        }
    }
    chain.b_attempts_mean = if n > 0 { b_attempts as f64 / n as f64 } else { 0.0 };
    chain.wall_time = start.elapsed();
    Ok(chain)
}

/// [`gibbs_fit`] driven by a ChaCha8 stream seeded with `seed`, recorded in the chain.
pub fn gibbs_fit_seeded<F: Scalar>(
    n_star: &ObservedSeries,
    prior: &PriorHyper<F>,
    cfg: &GibbsConfig,
    seed: u64,
) -> Result<PosteriorChain<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = gibbs_fit(n_star, prior, cfg, &mut rng)?;
    chain.seed = Some(seed);
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(z: &[f64], eta1: f64) -> BSuffStats<f64> {
        ArSuffStats::from_slice(z, eta1).unwrap()
    }

    #[test]
    fn default_prior_matches_weakly_informative_choice() {
        let p = PriorHyper::<f64>::default();
        assert_eq!((p.phi1, p.phi2, p.eta1, p.eta2), (0.1, 0.1, 0.0, 100.0));
        assert!(PriorHyper::new(0.1, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn reversal_invariance() {
        let z = [1.2, 2.5, 1.9, 0.4, 2.2, 3.1];
        let rev: Vec<f64> = z.iter().rev().copied().collect();
        let prior = PriorHyper::new(0.5, 0.3, 1.0, 4.0).unwrap();
        for &b in &[-1.7, -1.0, -0.2] {
            let a = log_marginal_b(b, &stats(&z, 1.0), &prior).unwrap();
            let c = log_marginal_b(b, &stats(&rev, 1.0), &prior).unwrap();
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn two_site_closed_form() {
        // T = 2: det(eta2 11' + B) = (1 + eta2)^2 - (eta2 + r)^2 and the inverse is
        // the 2x2 adjugate formula.
        let z = [1.3, 0.4];
        let prior = PriorHyper::new(0.7, 0.9, 0.2, 2.5).unwrap();
        let s = stats(&z, prior.eta1);
        let (w1, w2) = (z[0] - prior.eta1, z[1] - prior.eta1);
        let eval = |b: f64| {
            let r = 1.0 + b;
            let d = 1.0 + prior.eta2;
            let o = prior.eta2 + r;
            let det = d * d - o * o;
            let quad = (d * w1 * w1 - 2.0 * o * w1 * w2 + d * w2 * w2) / det;
            -0.5 * det.ln() - (prior.phi1 + 1.0) * (1.0 + quad / (2.0 * prior.phi2)).ln()
        };
        let offset = log_marginal_b(-0.5, &s, &prior).unwrap() - eval(-0.5);
        for &b in &[-1.95, -1.3, -0.8, -0.05] {
            let got = log_marginal_b(b, &s, &prior).unwrap() - offset;
            assert!((got - eval(b)).abs() < 1e-12, "b = {b}");
        }
    }

    #[test]
    fn sherman_morrison_vanishing_rank_one() {
        let s = stats(&[0.3, 1.1, -0.4, 0.9], 0.0);
        let q = s.quad_forms(0.4).unwrap();
        assert!((sherman_morrison_form(&q, 1e-14) - q.wbw).abs() < 1e-12);
        let prior = PriorHyper::new(0.1, 0.1, 0.0, 1e-14).unwrap();
        let (_, scale) = theta2_conditional(-0.6, &s, &prior).unwrap();
        assert!((scale - (0.1 + 0.5 * q.wbw)).abs() < 1e-12);
    }

    #[test]
    fn theta1_limits() {
        let z = [1.8, 2.3, 2.0, 1.5, 2.6];
        let s0 = stats(&z, 0.7);
        let q = s0.quad_forms(0.5).unwrap();
        let gls = (q.wb1 + 0.7 * q.oneb1) / q.oneb1;
        let vague = PriorHyper::new(0.1, 0.1, 0.7, 1e12).unwrap();
        let (m, _) = theta1_conditional(0.3, -0.5, &s0, &vague).unwrap();
        assert!((m - gls).abs() < 1e-9);
        let tight = PriorHyper::new(0.1, 0.1, 0.7, 1e-12).unwrap();
        let (m, v) = theta1_conditional(0.3, -0.5, &s0, &tight).unwrap();
        assert!((m - 0.7).abs() < 1e-9 && v < 1e-12);
    }

    #[test]
    fn maximum_dominates_grid() {
        let z = [2.1, 2.4, 1.6, 1.9, 2.8, 2.2, 1.4, 2.0];
        let prior = PriorHyper::default();
        let s = stats(&z, prior.eta1);
        let max = maximize_log_marginal_b(&s, &prior).unwrap();
        assert!(max.b_star > -2.0 && max.b_star < 0.0);
        for i in 1..200 {
            let b = -2.0 + 0.01 * i as f64;
            assert!(log_marginal_b(b, &s, &prior).unwrap() <= max.log_bound);
        }
    }

    #[test]
    fn rejects_out_of_support_b() {
        let s = stats(&[1.0, 2.0, 3.0], 0.0);
        let prior = PriorHyper::default();
        assert!(log_marginal_b(0.0, &s, &prior).is_err());
        assert!(log_marginal_b(-2.0, &s, &prior).is_err());
        assert!(theta2_conditional(0.1, &s, &prior).is_err());
    }
}
