//! Parameter algebra, stationary moments and forward simulation.
//!
//! The latent log-abundance follows `Z[t+1] = a + (1 + b) Z[t] + eps`, with
//! `eps ~ N(0, sigma2)`. Every public API is expressed in the stationary
//! parameterization `(theta1, theta2, b)`, where `theta1 = -a / b` is the
//! stationary mean and `theta2 = -sigma2 / (b (2 + b))` the stationary variance.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest expected count `exp(z)` accepted by the observation simulator.
pub const INTENSITY_CAP: f64 = 1e12;

/// Stationary parameterization `(theta1, theta2, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams<F> {
    theta1: F,
    theta2: F,
    b: F,
}

impl<F: Scalar> ModelParams<F> {
    pub fn new(theta1: F, theta2: F, b: F) -> Result<Self> {
        if !theta1.is_finite() {
            return Err(Error::InvalidParams(format!("theta1 = {theta1} is not finite")));
        }
        if !(theta2 > F::zero()) || !theta2.is_finite() {
            return Err(Error::InvalidParams(format!("theta2 = {theta2} must be positive")));
        }
        if !(b > -F::c(2.0) && b < F::zero()) {
            return Err(Error::InvalidParams(format!("b = {b} must lie in (-2, 0)")));
        }
        Ok(Self { theta1, theta2, b })
    }

    pub fn from_array(v: [F; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    #[inline]
    pub fn theta1(&self) -> F {
        self.theta1
    }

    #[inline]
    pub fn theta2(&self) -> F {
        self.theta2
    }

    #[inline]
    pub fn b(&self) -> F {
        self.b
    }

    /// Lag-one autoregression coefficient `1 + b`.
    #[inline]
    pub fn r(&self) -> F {
        F::one() + self.b
    }

    pub fn to_array(&self) -> [F; 3] {
        [self.theta1, self.theta2, self.b]
    }

    /// Maps to the dynamic parameterization `(a, sigma2, r)`.
    pub fn derive_natural(&self) -> NaturalParams<F> {
        let b = self.b;
        NaturalParams {
            a: -b * self.theta1,
            sigma2: -self.theta2 * b * (F::c(2.0) + b),
            r: F::one() + b,
        }
    }

    /// Stationary mean, variance and lag-`h` covariance of the abundance
    /// `N = exp(Z)`. Counts share the mean and lagged covariances; their
    /// variance adds the sampling noise, see [`CountMoments::count_variance`].
    pub fn stationary_moments(&self, h: u32) -> CountMoments<F> {
        let two = F::c(2.0);
        let scale = (two * self.theta1 + self.theta2).exp();
        let rh = self.r().powi(h as i32);
        CountMoments {
            mean: (self.theta1 + self.theta2 / two).exp(),
            variance: scale * self.theta2.exp_m1(),
            lag_cov: scale * (self.theta2 * rh).exp_m1(),
        }
    }
}

/// Dynamic parameterization: intrinsic growth rate `a`, process variance
/// `sigma2` and lag-one coefficient `r = 1 + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NaturalParams<F> {
    pub a: F,
    pub sigma2: F,
    pub r: F,
}

impl<F: Scalar> NaturalParams<F> {
    pub fn new(a: F, sigma2: F, r: F) -> Result<Self> {
        if !a.is_finite() || !(sigma2 > F::zero()) || !(r.abs() < F::one()) {
            return Err(Error::InvalidParams(format!(
                "natural parameters (a={a}, sigma2={sigma2}, r={r}) require sigma2 > 0 and |r| < 1"
            )));
        }
        Ok(Self { a, sigma2, r })
    }

    pub fn to_model(&self) -> Result<ModelParams<F>> {
        let b = self.r - F::one();
        ModelParams::new(-self.a / b, -self.sigma2 / (b * (F::c(2.0) + b)), b)
    }
}

/// Moments of the abundance at one time and the covariance `h` steps apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountMoments<F> {
    pub mean: F,
    pub variance: F,
    pub lag_cov: F,
}

impl<F: Scalar> CountMoments<F> {
    /// Marginal variance of the observed counts: abundance variance plus the
    /// expected sampling variance.
    pub fn count_variance(&self, noise: NoiseModel) -> F {
        match noise {
            NoiseModel::Poisson => self.variance + self.mean,
            NoiseModel::NegBinomialHalf => self.variance + F::c(2.0) * self.mean,
        }
    }
}

/// Log population sizes `Z[t] = log N[t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentTrajectory<F>(Vec<F>);

impl<F: Scalar> LatentTrajectory<F> {
    /// Wraps a finite, nonempty vector. Single-site trajectories are allowed so
    /// the likelihood can be evaluated on them; the samplers require two sites.
    pub fn new(z: Vec<F>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::TooShort { min: 1, got: 0 });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<F> {
        self.0
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }
}

/// Observed counts `N*[t]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ObservedSeries(Vec<u64>);

impl ObservedSeries {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::TooShort { min: 2, got: counts.len() });
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sampling-error distribution used when simulating counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum NoiseModel {
    /// `N* ~ Poisson(exp(Z))`.
    Poisson,
    /// Negative binomial with size `exp(Z)` and success probability 0.5, so the
    /// mean is `exp(Z)` and the variance `2 exp(Z)`.
    NegBinomialHalf,
}

/// Draws a stationary latent trajectory of length `len`; the first site comes
/// from the stationary law `N(theta1, theta2)`.
pub fn simulate_latent<F: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<F>,
    len: usize,
    rng: &mut R,
) -> Result<LatentTrajectory<F>> {
    if len < 2 {
        return Err(Error::TooShort { min: 2, got: len });
    }
    let nat = params.derive_natural();
    let sigma = nat.sigma2.sqrt();
    let mut z = Vec::with_capacity(len);
    let mut current = params.theta1() + params.theta2().sqrt() * F::std_normal(rng);
    z.push(current);
    for _ in 1..len {
        current = nat.a + nat.r * current + sigma * F::std_normal(rng);
        z.push(current);
    }
    LatentTrajectory::new(z)
}

/// Draws conditionally independent counts given the latent trajectory.
pub fn simulate_observations<F: Scalar, R: Rng + ?Sized>(
    z: &LatentTrajectory<F>,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<ObservedSeries> {
    let cap = F::c(INTENSITY_CAP);
    let mut counts = Vec::with_capacity(z.len());
    for (i, &zt) in z.as_slice().iter().enumerate() {
        let lambda = zt.exp();
        if !(lambda <= cap) {
            return Err(Error::IntensityOverflow { value: lambda.to_f64_lossy(), cap: INTENSITY_CAP });
        }
        let rate = match noise {
            NoiseModel::Poisson => lambda,
            // Gamma(size, scale (1 - p) / p = 1) mixing yields NB(size, p = 0.5).
            NoiseModel::NegBinomialHalf if lambda > F::zero() => {
                F::gamma(lambda, F::one(), rng).ok_or(Error::NonFinite(i))?
            }
            NoiseModel::NegBinomialHalf => F::zero(),
        };
        counts.push(F::poisson(rate, rng).ok_or(Error::NonFinite(i))?);
    }
    ObservedSeries::new(counts)
}

/// `log pi(Z | theta)` for the stationary AR(1), evaluated sequentially in O(T).
pub fn complete_data_loglik<F: Scalar>(z: &LatentTrajectory<F>, params: &ModelParams<F>) -> F {
    let zs = z.as_slice();
    let nat = params.derive_natural();
    let mut ll = normal_logpdf(zs[0], params.theta1(), params.theta2());
    for w in zs.windows(2) {
        ll = ll + normal_logpdf(w[1], nat.a + nat.r * w[0], nat.sigma2);
    }
    ll
}

#[inline]
pub(crate) fn normal_logpdf<F: Scalar>(x: F, mean: F, var: F) -> F {
    let d = x - mean;
    -F::c(0.5) * ((F::c(2.0) * F::PI() * var).ln() + d * d / var)
}
