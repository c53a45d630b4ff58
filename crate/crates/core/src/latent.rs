//! Exact draws of the latent log-abundances from their full conditionals.
//!
//! Given its neighbours, `Z[t]` has density proportional to
//! `exp(z N*[t] - e^z - (z - mu)^2 / (2 tau2))`, a Gaussian kernel times a
//! Poisson likelihood. It is sampled by accept-reject from `N(xi, tau2)`: with
//! the proposal variance equal to `tau2` the log ratio target/proposal is
//! concave, maximized at `z_hat = ln((N* tau2 - xi + mu) / tau2)`, and the mean
//! minimizing that maximum is `xi = N* tau2 + mu - W0(tau2 exp(N* tau2 + mu))`.
//!
//! A wider proposal (`omega2 > tau2`) also yields a valid envelope, with
//! maximizer `c W0(omega2 tau2 / (omega2 - tau2) e^c)` where
//! `c = (N* omega2 tau2 - xi tau2 + mu omega2) / (omega2 - tau2)`; only the
//! `omega2 = tau2` branch is implemented.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lambert::lambert_w0_of_log;
use crate::model::{complete_data_loglik, LatentTrajectory, ModelParams, ObservedSeries};
use crate::quadrature::gauss_hermite;
use crate::scalar::{log_sum_exp, Scalar};

/// Attempts allowed per site before the sampler reports an envelope failure.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

/// Default number of importance draws for [`sir_initialize`].
pub const SIR_DRAWS: usize = 10_000;

/// Gaussian part `N(mu, tau2)` of a site's full conditional plus its count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullConditional<F> {
    pub mu: F,
    pub tau2: F,
    pub n_star: u64,
}

impl<F: Scalar> FullConditional<F> {
    pub fn new(mu: F, tau2: F, n_star: u64) -> Result<Self> {
        if !mu.is_finite() || !(tau2 > F::zero()) || !tau2.is_finite() {
            return Err(Error::InvalidParams(format!("site conditional mu={mu}, tau2={tau2}")));
        }
        Ok(Self { mu, tau2, n_star })
    }
}

/// Accept-reject proposal `N(xi, omega2)` with its envelope maximizer and bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proposal<F> {
    pub xi: F,
    pub omega2: F,
    pub z_hat: F,
    pub log_bound: F,
}

/// Parameter-derived constants shared by every site of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SiteKernel<F> {
    theta1: F,
    a: F,
    r: F,
    sigma2: F,
    tau2_first: F,
    tau2_inner: F,
    denom_first: F,
    theta2: F,
}

impl<F: Scalar> SiteKernel<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        let nat = params.derive_natural();
        let r = nat.r;
        // Z1 | Z2 combines the stationary N(theta1, theta2) with the transition
        // density of Z2, whose precision contributes r^2 / sigma2.
        let denom_first = nat.sigma2 + r * r * params.theta2();
        Self {
            theta1: params.theta1(),
            a: nat.a,
            r,
            sigma2: nat.sigma2,
            tau2_first: nat.sigma2 * params.theta2() / denom_first,
            tau2_inner: nat.sigma2 / (F::one() + r * r),
            denom_first,
            theta2: params.theta2(),
        }
    }

    /// Conditional of site `t` (0-based) in a series of length `len`, given the
    /// neighbouring values that exist.
    #[inline]
    pub fn conditional(&self, t: usize, len: usize, prev: F, next: F, n_star: u64) -> FullConditional<F> {
        let (mu, tau2) = if t == 0 {
            (
                (self.theta1 * self.sigma2 + (next - self.a) * self.r * self.theta2) / self.denom_first,
                self.tau2_first,
            )
        } else if t + 1 == len {
            (self.a + self.r * prev, self.sigma2)
        } else {
            (
                (self.a + self.r * (next + prev - self.a)) / (F::one() + self.r * self.r),
                self.tau2_inner,
            )
        };
        FullConditional { mu, tau2, n_star }
    }
}

/// Full conditional of site `t` (0-based) given the rest of `z`.
pub fn full_conditional_params<F: Scalar>(
    t: usize,
    z: &LatentTrajectory<F>,
    n_star: &ObservedSeries,
    params: &ModelParams<F>,
) -> Result<FullConditional<F>> {
    let len = z.len();
    if len != n_star.len() {
        return Err(Error::LengthMismatch(len, n_star.len()));
    }
    if len < 2 {
        return Err(Error::TooShort { min: 2, got: len });
    }
    if t >= len {
        return Err(Error::IndexOutOfRange { index: t, len });
    }
    let zs = z.as_slice();
    let prev = if t > 0 { zs[t - 1] } else { F::nan() };
    let next = if t + 1 < len { zs[t + 1] } else { F::nan() };
    Ok(SiteKernel::new(params).conditional(t, len, prev, next, n_star.counts()[t]))
}

/// Minimax proposal for the site conditional.
pub fn optimal_proposal<F: Scalar>(fc: &FullConditional<F>) -> Proposal<F> {
    let n = F::from_count(fc.n_star);
    let tau2 = fc.tau2;
    let m = n * tau2 + fc.mu;
    // W0(tau2 * exp(m)) evaluated from its logarithm.
    let log_arg = tau2.ln() + m;
    let w = lambert_w0_of_log(log_arg);
    let xi = m - w;
    let ratio = (n * tau2 - xi + fc.mu) / tau2;
    let z_hat = if ratio > F::min_positive_value() && ratio.is_finite() {
        ratio.ln()
    } else {
        // W e^W = x  =>  ln(W / tau2) = ln x - W - ln tau2.
        log_arg - w - tau2.ln()
    };
    // The literal `z_hat` cancels when W is tiny relative to `m`; the ratio
    // kernel peaks at `xi`, so take the larger value to keep the bound valid.
    let log_bound = log_ratio_kernel(z_hat, fc, xi, tau2).max(log_ratio_kernel(xi, fc, xi, tau2));
    Proposal { xi, omega2: tau2, z_hat, log_bound }
}

/// `z N* - e^z - (z - mu)^2 / (2 tau2)`.
#[inline]
pub fn log_target_unnormalized<F: Scalar>(z: F, fc: &FullConditional<F>) -> F {
    let d = z - fc.mu;
    z * F::from_count(fc.n_star) - z.exp() - d * d / (F::c(2.0) * fc.tau2)
}

#[inline]
fn log_ratio_kernel<F: Scalar>(z: F, fc: &FullConditional<F>, xi: F, omega2: F) -> F {
    let d = z - xi;
    log_target_unnormalized(z, fc) + d * d / (F::c(2.0) * omega2)
}

/// Log acceptance probability of candidate `z`: `log h(z) - log_bound`.
#[inline]
pub fn log_acceptance<F: Scalar>(z: F, fc: &FullConditional<F>, prop: &Proposal<F>) -> F {
    log_ratio_kernel(z, fc, prop.xi, prop.omega2) - prop.log_bound
}

/// One exact draw from the site conditional; returns the value and the number
/// of proposals consumed.
pub fn sample_latent_site<F: Scalar, R: Rng + ?Sized>(
    fc: &FullConditional<F>,
    prop: &Proposal<F>,
    rng: &mut R,
) -> Result<(F, u64)> {
    let sd = prop.omega2.sqrt();
    for attempt in 1..=MAX_ATTEMPTS {
        let z = prop.xi + sd * F::std_normal(rng);
        let u = F::unit_uniform(rng);
        if u.ln() <= log_acceptance(z, fc, prop) {
            return Ok((z, attempt));
        }
    }
    Err(Error::EnvelopeFailure { attempts: MAX_ATTEMPTS, context: "latent site" })
}

/// `log int exp(log_target_unnormalized(z)) dz`, by Gauss-Hermite quadrature
/// centred at the mode (which coincides with the optimal proposal mean).
pub fn log_site_normalizer<F: Scalar>(fc: &FullConditional<F>, prop: &Proposal<F>) -> F {
    let mode = prop.xi;
    let curvature = F::one() / fc.tau2 + mode.exp();
    let scale = (F::c(2.0) / curvature).sqrt();
    let terms: Vec<F> = gauss_hermite()
        .iter()
        .map(|&(x, w)| {
            let x = F::c(x);
            log_target_unnormalized(mode + scale * x, fc) + x * x + F::c(w).ln()
        })
        .collect();
    log_sum_exp(&terms) + scale.ln()
}

/// Systematic-scan update of every site, in place.
pub fn sweep_in_place<F: Scalar, R: Rng + ?Sized>(
    z: &mut [F],
    counts: &[u64],
    kernel: &SiteKernel<F>,
    rng: &mut R,
) -> Result<u64> {
    let len = z.len();
    if len != counts.len() {
        return Err(Error::LengthMismatch(len, counts.len()));
    }
    if len < 2 {
        return Err(Error::TooShort { min: 2, got: len });
    }
    let mut attempts = 0;
    for t in 0..len {
        let prev = if t > 0 { z[t - 1] } else { F::nan() };
        let next = if t + 1 < len { z[t + 1] } else { F::nan() };
        let fc = kernel.conditional(t, len, prev, next, counts[t]);
        let prop = optimal_proposal(&fc);
        let (draw, used) = sample_latent_site(&fc, &prop, rng)?;
        z[t] = draw;
        attempts += used;
    }
    Ok(attempts)
}

/// One Gibbs sweep over sites `1..T`, returning the updated trajectory.
pub fn gibbs_sweep_latent<F: Scalar, R: Rng + ?Sized>(
    z: &LatentTrajectory<F>,
    n_star: &ObservedSeries,
    params: &ModelParams<F>,
    rng: &mut R,
) -> Result<LatentTrajectory<F>> {
    let mut out = z.clone();
    sweep_in_place(out.as_mut_slice(), n_star.counts(), &SiteKernel::new(params), rng)?;
    Ok(out)
}

/// Importance sample for the latent initialization.
#[derive(Debug, Clone)]
pub struct SirSample<F> {
    pub draws: Vec<LatentTrajectory<F>>,
    /// Normalized importance weights (sum to one).
    pub weights: Vec<F>,
}

impl<F: Scalar> SirSample<F> {
    /// Picks one draw with probability proportional to its weight.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentTrajectory<F> {
        let u = F::unit_uniform(rng);
        let mut acc = F::zero();
        for (draw, &w) in self.draws.iter().zip(&self.weights) {
            acc = acc + w;
            if u < acc {
                return draw.clone();
            }
        }
        // Rounding left the cumulative sum just below one.
        let last = self.weights.iter().rposition(|&w| w > F::zero()).unwrap_or(self.draws.len() - 1);
        self.draws[last].clone()
    }

    pub fn effective_size(&self) -> F {
        F::one() / self.weights.iter().fold(F::zero(), |acc, &w| acc + w * w)
    }
}

/// Pseudo-observation `log N*` substituted for the right neighbour during the
/// forward importance pass; zero counts are shifted by one half.
fn pseudo_log_count<F: Scalar>(n: u64) -> F {
    if n == 0 {
        F::c(0.5).ln()
    } else {
        F::from_count(n).ln()
    }
}

/// Draws `n_draws` trajectories sequentially from the product of site
/// conditionals in which the right neighbour is replaced by its log count, and
/// weights each by `pi(N*, Z | theta) / q(Z)`.
pub fn sir_draws<F: Scalar, R: Rng + ?Sized>(
    n_star: &ObservedSeries,
    params: &ModelParams<F>,
    n_draws: usize,
    rng: &mut R,
) -> Result<SirSample<F>> {
    if n_draws == 0 {
        return Err(Error::Empty("importance draws"));
    }
    let counts = n_star.counts();
    let len = counts.len();
    let kernel = SiteKernel::new(params);
    let pseudo: Vec<F> = counts.iter().map(|&n| pseudo_log_count(n)).collect();
    let mut draws = Vec::with_capacity(n_draws);
    let mut log_w = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut z = Vec::with_capacity(len);
        let mut log_q = F::zero();
        let mut log_obs = F::zero();
        for t in 0..len {
            let prev = if t > 0 { z[t - 1] } else { F::nan() };
            let next = if t + 1 < len { pseudo[t + 1] } else { F::nan() };
            let fc = kernel.conditional(t, len, prev, next, counts[t]);
            let prop = optimal_proposal(&fc);
            let (draw, _) = sample_latent_site(&fc, &prop, rng)?;
            log_q = log_q + log_target_unnormalized(draw, &fc) - log_site_normalizer(&fc, &prop);
            log_obs = log_obs + draw * F::from_count(counts[t]) - draw.exp();
            z.push(draw);
        }
        let traj = LatentTrajectory::new(z)?;
        log_w.push(log_obs + complete_data_loglik(&traj, params) - log_q);
        draws.push(traj);
    }
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return Err(Error::DegenerateWeights(format!("log normalizer {total}")));
    }
    let weights: Vec<F> = log_w.iter().map(|&lw| (lw - total).exp()).collect();
    if !weights.iter().any(|&w| w > F::zero()) {
        return Err(Error::DegenerateWeights("all weights underflowed".into()));
    }
    Ok(SirSample { draws, weights })
}

/// Sampling-importance-resampling start for the latent trajectory.
pub fn sir_initialize<F: Scalar, R: Rng + ?Sized>(
    n_star: &ObservedSeries,
    params: &ModelParams<F>,
    n_draws: usize,
    rng: &mut R,
) -> Result<LatentTrajectory<F>> {
    let sample = sir_draws(n_star, params, n_draws, rng)?;
    Ok(sample.resample(rng))
}
