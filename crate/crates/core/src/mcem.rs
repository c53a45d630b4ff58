//! Maximum likelihood by Monte Carlo EM.
//!
//! The E-step runs the latent Gibbs sampler at the current iterate and keeps
//! the five AR(1) sums of each retained trajectory; the complete-data
//! log-likelihood is linear in them, so the Monte Carlo objective is the
//! AR(1) log-likelihood at the averaged sums. The M-step profiles out
//! `theta1` and `theta2` in closed form and searches the remaining
//! one-dimensional profile in `b`. The Monte Carlo sample size grows by
//! doubling whenever the estimated improvement is not clearly positive.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ar1::{loglik_derivs, loglik_from_stats, ArSuffStats};
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::latent::{sir_initialize, sweep_in_place, SiteKernel, SIR_DRAWS};
use crate::linalg::{mat_vec, sym_inverse, symmetrize, Mat3};
use crate::model::{LatentTrajectory, ModelParams, ObservedSeries};
use crate::optimize::grid_then_golden;
use crate::scalar::Scalar;

const THETA2_FLOOR: f64 = 1e-6;
const B_CLAMP: f64 = 1e-3;
const B_EDGE: f64 = 1e-6;

fn clamp_moments<F: Scalar>(m: F, v: F, c1: F) -> Result<ModelParams<F>> {
    let one = F::one();
    let m2 = m * m;
    // Poisson sampling adds `m` to the count variance.
    let mut theta2 = ((v - m) / m2).ln_1p();
    if !(theta2 >= F::c(THETA2_FLOOR)) {
        theta2 = F::c(THETA2_FLOOR);
    }
    let theta1 = m.ln() - theta2 / F::c(2.0);
    let ratio = (c1 / m2).ln_1p() / theta2;
    let lo = F::c(-2.0 + B_CLAMP);
    let hi = F::c(-B_CLAMP);
    let b = if ratio.is_nan() { lo } else { (ratio - one).max(lo).min(hi) };
    ModelParams::new(theta1, theta2, b)
}

/// Inverts sample mean `m`, count variance `v` and lag-one autocovariance
/// `c1` into `(theta1, theta2, b)` under Poisson sampling, with the clamps of
/// [`method_of_moments`].
pub fn moments_to_params<F: Scalar>(m: F, v: F, c1: F) -> Result<ModelParams<F>> {
    if !(m > F::zero()) {
        return Err(Error::AllZeroCounts);
    }
    if !(v > F::zero()) {
        return Err(Error::ZeroVariance);
    }
    clamp_moments(m, v, c1)
}

/// Moment estimator from the sample mean, variance and lag-one
/// autocovariance (both with divisor `T`). `theta2` is floored at `1e-6` and
/// `b` clamped into `[-2 + 1e-3, -1e-3]`.
pub fn method_of_moments<F: Scalar>(n_star: &ObservedSeries) -> Result<ModelParams<F>> {
    let x: Vec<F> = n_star.counts().iter().map(|&c| F::from_count(c)).collect();
    let n = F::from_usize_lossy(x.len());
    let m = x.iter().fold(F::zero(), |a, &v| a + v) / n;
    let v = x.iter().fold(F::zero(), |a, &v| a + (v - m) * (v - m)) / n;
    let c1 = x.windows(2).fold(F::zero(), |a, w| a + (w[0] - m) * (w[1] - m)) / n;
    if m == F::zero() {
        return Err(Error::AllZeroCounts);
    }
    moments_to_params(m, v, c1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct McemConfig {
    pub j_initial: usize,
    pub j_max: usize,
    pub max_iterations: usize,
    /// Threshold on the largest relative parameter change.
    pub rel_tol: f64,
    /// One-sided level of the ascent test.
    pub ascent_alpha: f64,
    /// Sweeps between retained latent trajectories.
    pub thinning: usize,
    /// Sweeps discarded at the start of every E-step.
    pub burn_in: usize,
    pub sir_draws: usize,
    /// Trajectories drawn at the estimate for the information matrix;
    /// `None` uses the final Monte Carlo sample size.
    pub louis_draws: Option<usize>,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            j_initial: 1_000,
            j_max: 20_000,
            max_iterations: 100,
            rel_tol: 1e-3,
            ascent_alpha: 0.25,
            thinning: 1,
            burn_in: 100,
            sir_draws: SIR_DRAWS,
            louis_draws: None,
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.j_initial == 0 || self.j_initial > self.j_max {
            return bad("require 1 <= j_initial <= j_max");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.ascent_alpha > 0.0 && self.ascent_alpha < 0.5) {
            return bad("ascent_alpha must lie in (0, 0.5)");
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1");
        }
        Ok(())
    }
}

/// Retained E-step draws, kept as per-trajectory sufficient statistics, plus
/// the chain's current state for warm starts.
#[derive(Debug, Clone)]
pub struct LatentBank<F> {
    pub stats: Vec<ArSuffStats<F>>,
    pub last: Vec<F>,
}

impl<F: Scalar> LatentBank<F> {
    pub fn from_trajectories(trajectories: &[LatentTrajectory<F>]) -> Result<Self> {
        let last = trajectories.last().ok_or(Error::Empty("latent bank"))?.as_slice().to_vec();
        let stats = trajectories
            .iter()
            .map(|z| ArSuffStats::from_slice(z.as_slice(), F::zero()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stats, last })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Monte Carlo estimate of `Q(theta)`.
    pub fn objective(&self, params: &ModelParams<F>) -> Result<F> {
        Ok(loglik_from_stats(&ArSuffStats::mean_of(&self.stats)?, params))
    }

    /// Continues the chain behind the bank at `params` until it holds `target` draws.
    pub fn extend_to<R: Rng + ?Sized>(
        &mut self,
        target: usize,
        n_star: &ObservedSeries,
        params: &ModelParams<F>,
        thinning: usize,
        rng: &mut R,
    ) -> Result<()> {
        let kernel = SiteKernel::new(params);
        let counts = n_star.counts();
        self.stats.reserve(target.saturating_sub(self.stats.len()));
        while self.stats.len() < target {
            for _ in 0..thinning.max(1) {
                sweep_in_place(&mut self.last, counts, &kernel, rng)?;
            }
            self.stats.push(ArSuffStats::from_slice(&self.last, F::zero())?);
        }
        Ok(())
    }
}

/// Draws a fresh bank of `j` trajectories at `params`, warm-started from `start`.
pub fn monte_carlo_e_step<F: Scalar, R: Rng + ?Sized>(
    start: &[F],
    n_star: &ObservedSeries,
    params: &ModelParams<F>,
    j: usize,
    burn_in: usize,
    thinning: usize,
    rng: &mut R,
) -> Result<LatentBank<F>> {
    let mut bank = LatentBank { stats: Vec::with_capacity(j), last: start.to_vec() };
    let kernel = SiteKernel::new(params);
    for _ in 0..burn_in {
        sweep_in_place(&mut bank.last, n_star.counts(), &kernel, rng)?;
    }
    bank.extend_to(j, n_star, params, thinning, rng)?;
    Ok(bank)
}

/// Maximizer of the profile over `theta1, theta2` at fixed `r`, with the
/// achieved objective.
fn profile_at<F: Scalar>(stats: &ArSuffStats<F>, b: F) -> Option<(ModelParams<F>, F)> {
    let r = F::one() + b;
    let u = F::one() - r * r;
    let a = stats.quad_poly(r)[0];
    let bv = stats.cross_poly(r)[0];
    let cv = stats.ones_poly(r)[0];
    let theta1 = bv / cv;
    let f = a - bv * bv / cv;
    let theta2 = f / (F::from_usize_lossy(stats.len) * u);
    let params = ModelParams::new(theta1, theta2, b).ok()?;
    let value = loglik_from_stats(stats, &params);
    value.is_finite().then_some((params, value))
}

/// Maximizes the Monte Carlo objective over `theta1`, `theta2 > 0` and
/// `b in (-2, 0)`. The result never scores below `theta_init`.
pub fn m_step<F: Scalar>(bank: &[ArSuffStats<F>], theta_init: &ModelParams<F>) -> Result<ModelParams<F>> {
    let stats = ArSuffStats::mean_of(bank)?;
    let init_value = loglik_from_stats(&stats, theta_init);
    let profile = |b: F| profile_at(&stats, b).map_or(F::neg_infinity(), |(_, v)| v);
    let grid = (1..200).map(|i| F::c(-2.0 + 0.01 * i as f64));
    let bounds = (F::c(-2.0 + B_EDGE), F::c(-B_EDGE));
    let (b_star, _) = grid_then_golden(profile, grid, F::c(0.01), bounds, F::c(1e-12));
    let mut best = match profile_at(&stats, b_star) {
        Some(found) => found,
        None => (*theta_init, init_value),
    };
    // One Newton step on the full objective cleans up the line search.
    let d = loglik_derivs(&stats, &best.0);
    let inv = sym_inverse(&d.hess.map(|row| row.map(|x| -x)));
    if inv.positive_definite {
        let step = mat_vec(&inv.matrix, &d.grad);
        let x = best.0.to_array();
        if let Ok(p) = ModelParams::new(x[0] + step[0], x[1] + step[1], x[2] + step[2]) {
            let v = loglik_from_stats(&stats, &p);
            if v >= best.1 && !(p.b() > F::c(-B_EDGE) || p.b() < F::c(-2.0 + B_EDGE)) {
                best = (p, v);
            }
        }
    }
    if best.1 >= init_value {
        Ok(best.0)
    } else if init_value.is_finite() {
        Ok(*theta_init)
    } else {
        Err(Error::Optimizer(format!("objective not finite near b = {b_star}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AscentDecision {
    Accept,
    GrowJ,
}

/// Fitting state between EM iterations.
#[derive(Debug, Clone)]
pub struct McemState<F> {
    pub theta_k: ModelParams<F>,
    pub j_current: usize,
    pub q_history: Vec<(usize, F, usize)>,
    pub latent_bank: LatentBank<F>,
}

/// Accepts when the one-sided lower confidence bound of `q_new - q_old`
/// is positive; otherwise doubles `J`, capped at `j_max`.
pub fn ascent_check_and_grow<F: Scalar>(
    state: &mut McemState<F>,
    q_old: F,
    q_new: F,
    mc_sd: F,
    cfg: &McemConfig,
) -> AscentDecision {
    let z = F::c(normal_quantile(1.0 - cfg.ascent_alpha));
    if q_new - q_old - z * mc_sd > F::zero() {
        AscentDecision::Accept
    } else {
        state.j_current = (state.j_current.saturating_mul(2)).min(cfg.j_max).max(state.j_current);
        AscentDecision::GrowJ
    }
}

fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Mean improvement `Q(new) - Q(old)` over the bank and its Monte Carlo
/// standard error, with the effective sample size of the per-draw
/// differences accounting for chain autocorrelation.
pub fn ascent_statistics<F: Scalar>(
    bank: &[ArSuffStats<F>],
    old: &ModelParams<F>,
    new: &ModelParams<F>,
) -> Result<(F, F)> {
    if bank.is_empty() {
        return Err(Error::Empty("latent bank"));
    }
    let d: Vec<F> = bank.iter().map(|s| loglik_from_stats(s, new) - loglik_from_stats(s, old)).collect();
    let n = F::from_usize_lossy(d.len());
    let mean = d.iter().fold(F::zero(), |a, &x| a + x) / n;
    if d.len() < 2 {
        return Ok((mean, F::zero()));
    }
    let var = d.iter().fold(F::zero(), |a, &x| a + (x - mean).powi(2)) / (n - F::one());
    let ess = match effective_sample_size(&d) {
        Ok(e) => e,
        Err(Error::ConstantChain) => return Ok((mean, F::zero())),
        Err(e) => return Err(e),
    };
    Ok((mean, (var / ess).sqrt()))
}

/// One row of the iteration log.
#[derive(Debug, Clone, Serialize)]
pub struct McemIteration<F> {
    pub iteration: usize,
    pub j: usize,
    pub theta: [F; 3],
    /// `Q(theta_new) - Q(theta_old)` on the bank drawn at `theta_old`.
    pub delta_q: F,
    pub delta_q_se: F,
    pub q_estimate: F,
    /// Accepted at `j_max` without passing the ascent test.
    pub forced: bool,
    pub rel_change: F,
}

#[derive(Debug, Clone, Serialize)]
pub struct MleFit<F> {
    pub theta_hat: ModelParams<F>,
    pub covariance: Mat3<F>,
    /// Whether the observed information was positive definite; if not, the
    /// covariance is a pseudo-inverse.
    pub information_positive_definite: bool,
    pub iterations: usize,
    pub converged: bool,
    pub final_j: usize,
    pub wall_time: Duration,
    pub seed: Option<u64>,
    pub trace: Vec<McemIteration<F>>,
}

impl<F: Scalar> MleFit<F> {
    pub fn standard_errors(&self) -> [F; 3] {
        [0, 1, 2].map(|i| self.covariance[i][i].max(F::zero()).sqrt())
    }
}

fn max_rel_change<F: Scalar>(old: &ModelParams<F>, new: &ModelParams<F>) -> F {
    let (a, b) = (old.to_array(), new.to_array());
    (0..3).fold(F::zero(), |m, i| m.max((b[i] - a[i]).abs() / (a[i].abs() + F::c(1e-8))))
}

/// Full MCEM fit: moment start, SIR latent start, EM iterations with the
/// ascent rule, and the information matrix at the final estimate.
pub fn mcem_fit<F: Scalar, R: Rng + ?Sized>(
    n_star: &ObservedSeries,
    cfg: &McemConfig,
    rng: &mut R,
) -> Result<MleFit<F>> {
    cfg.validate()?;
    let start = Instant::now();
    let init = method_of_moments::<F>(n_star).map_err(|e| Error::Initialization(Box::new(e)))?;
    let z0 = sir_initialize(n_star, &init, cfg.sir_draws, rng).map_err(|e| Error::Initialization(Box::new(e)))?;
    let mut state = McemState {
        theta_k: init,
        j_current: cfg.j_initial,
        q_history: Vec::new(),
        latent_bank: LatentBank { stats: Vec::new(), last: z0.into_vec() },
    };
    let mut trace = Vec::new();
    let mut small_steps = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let theta_old = state.theta_k;
        let mut bank = monte_carlo_e_step(
            &state.latent_bank.last,
            n_star,
            &theta_old,
            state.j_current,
            cfg.burn_in,
            cfg.thinning,
            rng,
        )?;
        let (theta_new, delta, se, forced) = loop {
            let theta_new = m_step(&bank.stats, &theta_old)?;
            let (delta, se) = ascent_statistics(&bank.stats, &theta_old, &theta_new)?;
            let q_old = bank.objective(&theta_old)?;
            let j_before = state.j_current;
            match ascent_check_and_grow(&mut state, q_old, q_old + delta, se, cfg) {
                AscentDecision::Accept => break (theta_new, delta, se, false),
                AscentDecision::GrowJ if j_before == cfg.j_max => break (theta_new, delta, se, true),
                AscentDecision::GrowJ => {
                    bank.extend_to(state.j_current, n_star, &theta_old, cfg.thinning, rng)?;
                }
            }
        };
        let q_new = bank.objective(&theta_new)?;
        let rel = max_rel_change(&theta_old, &theta_new);
        state.q_history.push((iterations, q_new, state.j_current));
        trace.push(McemIteration {
            iteration: iterations,
            j: bank.len(),
            theta: theta_new.to_array(),
            delta_q: delta,
            delta_q_se: se,
            q_estimate: q_new,
            forced,
            rel_change: rel,
        });
        state.theta_k = theta_new;
        state.latent_bank = bank;
        small_steps = if rel < F::c(cfg.rel_tol) { small_steps + 1 } else { 0 };
        if small_steps >= 2 {
            converged = true;
            break;
        }
    }

    let theta_hat = state.theta_k;
    let louis_j = cfg.louis_draws.unwrap_or(state.j_current).max(1);
    let bank = monte_carlo_e_step(&state.latent_bank.last, n_star, &theta_hat, louis_j, cfg.burn_in, cfg.thinning, rng)?;
    let (covariance, information_positive_definite) = louis_covariance(&bank.stats, &theta_hat)?;
    Ok(MleFit {
        theta_hat,
        covariance,
        information_positive_definite,
        iterations,
        converged,
        final_j: state.j_current,
        wall_time: start.elapsed(),
        seed: None,
        trace,
    })
}

/// [`mcem_fit`] on a ChaCha8 stream seeded with `seed`.
pub fn mcem_fit_seeded<F: Scalar>(n_star: &ObservedSeries, cfg: &McemConfig, seed: u64) -> Result<MleFit<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = mcem_fit(n_star, cfg, &mut rng)?;
    fit.seed = Some(seed);
    Ok(fit)
}

/// Observed information by Louis' identity:
/// mean of `-Hessian` minus the covariance of the scores (divisor `J`).
pub fn louis_information<F: Scalar>(bank: &[ArSuffStats<F>], theta_hat: &ModelParams<F>) -> Result<Mat3<F>> {
    if bank.is_empty() {
        return Err(Error::Empty("latent bank"));
    }
    let n = F::from_usize_lossy(bank.len());
    let mean_stats = ArSuffStats::mean_of(bank)?;
    let hess = loglik_derivs(&mean_stats, theta_hat).hess;
    let scores: Vec<[F; 3]> = bank.iter().map(|s| loglik_derivs(s, theta_hat).grad).collect();
    let mut mean_score = [F::zero(); 3];
    for g in &scores {
        for i in 0..3 {
            mean_score[i] = mean_score[i] + g[i] / n;
        }
    }
    let mut info = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let cov = scores
                .iter()
                .fold(F::zero(), |a, g| a + (g[i] - mean_score[i]) * (g[j] - mean_score[j]))
                / n;
            info[i][j] = -hess[i][j] - cov;
        }
    }
    Ok(symmetrize(info))
}

/// Inverse of the Louis information; the flag is false when the information
/// was not positive definite and a pseudo-inverse was used.
pub fn louis_covariance<F: Scalar>(bank: &[ArSuffStats<F>], theta_hat: &ModelParams<F>) -> Result<(Mat3<F>, bool)> {
    let inv = sym_inverse(&louis_information(bank, theta_hat)?);
    Ok((inv.matrix, inv.positive_definite))
}

/// Normal-theory intervals `theta_i +/- z sqrt(cov_ii)`.
pub fn wald_intervals<F: Scalar>(fit: &MleFit<F>, level: f64) -> Result<[(F, F); 3]> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let z = F::c(normal_quantile((1.0 + level) / 2.0));
    let theta = fit.theta_hat.to_array();
    let se = fit.standard_errors();
    Ok([0, 1, 2].map(|i| (theta[i] - z * se[i], theta[i] + z * se[i])))
}
