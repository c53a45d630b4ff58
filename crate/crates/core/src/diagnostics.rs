//! Single-chain summaries and replicate-level accuracy metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default number of autocorrelation lags kept in a [`ChainSummary`].
pub const DEFAULT_MAX_LAG: usize = 50;

fn mean<F: Scalar>(x: &[F]) -> F {
    x.iter().fold(F::zero(), |acc, &v| acc + v) / F::from_usize_lossy(x.len())
}

/// Biased (divide by `n`) autocovariance at `lag` about `m`.
fn autocov<F: Scalar>(x: &[F], m: F, lag: usize) -> F {
    let n = x.len();
    let mut s = F::zero();
    for t in 0..n - lag {
        s = s + (x[t] - m) * (x[t + lag] - m);
    }
    s / F::from_usize_lossy(n)
}

fn centered_variance<F: Scalar>(x: &[F]) -> Result<(F, F)> {
    if x.is_empty() {
        return Err(Error::Empty("chain"));
    }
    let m = mean(x);
    let g0 = autocov(x, m, 0);
    // Exact comparison: rounding leaves a tiny positive variance for
    // near-constant chains, which is still a valid input.
    if !(g0 > F::zero()) {
        return Err(Error::ConstantChain);
    }
    Ok((m, g0))
}

/// Sample autocorrelations `rho(0..=max_lag)` with the biased estimator.
pub fn autocorrelation<F: Scalar>(chain: &[F], max_lag: usize) -> Result<Vec<F>> {
    if chain.len() <= max_lag {
        return Err(Error::ChainTooShort { len: chain.len(), max_lag });
    }
    let (m, g0) = centered_variance(chain)?;
    Ok((0..=max_lag)
        .map(|k| if k == 0 { F::one() } else { autocov(chain, m, k) / g0 })
        .collect())
}

/// Effective sample size `n / (1 + 2 sum rho(k))`, truncating the sum at the
/// first non-positive pair `rho(2k) + rho(2k+1)`. Never exceeds `n`.
pub fn effective_sample_size<F: Scalar>(chain: &[F]) -> Result<F> {
    let n = chain.len();
    let (m, g0) = centered_variance(chain)?;
    let nf = F::from_usize_lossy(n);
    let rho = |k: usize| if k < n { autocov(chain, m, k) / g0 } else { F::zero() };
    let mut pair_sum = F::zero();
    let mut k = 0;
    while 2 * k < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if !(pair > F::zero()) {
            break;
        }
        pair_sum = pair_sum + pair;
        k += 1;
    }
    let tau = F::c(2.0) * pair_sum - F::one();
    if !(tau > F::one()) {
        return Ok(nf);
    }
    Ok(nf / tau)
}

/// Empirical quantile by linear interpolation between order statistics:
/// position `(n - 1) p` in the sorted sample.
pub fn quantile_sorted<F: Scalar>(sorted: &[F], p: F) -> Result<F> {
    if sorted.is_empty() {
        return Err(Error::Empty("sample"));
    }
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::InvalidLevel(p.to_f64_lossy()));
    }
    let h = F::from_usize_lossy(sorted.len() - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - F::from_usize_lossy(lo);
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn sorted_copy<F: Scalar>(x: &[F]) -> Vec<F> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Arbitrary quantiles of an unsorted sample.
pub fn quantiles<F: Scalar>(x: &[F], probs: &[F]) -> Result<Vec<F>> {
    let sorted = sorted_copy(x);
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

/// Equal-tailed interval holding `level` of the draws.
pub fn credible_interval<F: Scalar>(chain: &[F], level: F) -> Result<(F, F)> {
    if !(level > F::zero() && level < F::one()) {
        return Err(Error::InvalidLevel(level.to_f64_lossy()));
    }
    let tail = (F::one() - level) / F::c(2.0);
    let q = quantiles(chain, &[tail, F::one() - tail])?;
    Ok((q[0], q[1]))
}

/// Mean squared error of point estimates and the fraction of intervals
/// `(point, low, high)` containing `truth`.
pub fn mse_and_coverage<F: Scalar>(estimates: &[(F, F, F)], truth: F) -> Result<(F, F)> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    let n = F::from_usize_lossy(estimates.len());
    let mut se = F::zero();
    let mut hits = 0usize;
    for &(point, low, high) in estimates {
        se = se + (point - truth).powi(2);
        if low <= truth && truth <= high {
            hits += 1;
        }
    }
    Ok((se / n, F::from_usize_lossy(hits) / n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary<F> {
    pub mean: F,
    pub median: F,
    pub sd: F,
    pub q025: F,
    pub q25: F,
    pub q75: F,
    pub q975: F,
    pub ess: F,
    pub acf: Vec<F>,
}

impl<F: Scalar> ChainSummary<F> {
    /// Summary with autocorrelations up to `min(max_lag, n - 1)`.
    pub fn from_chain(chain: &[F], max_lag: usize) -> Result<Self> {
        if chain.len() < 2 {
            return Err(Error::ChainTooShort { len: chain.len(), max_lag });
        }
        let acf = autocorrelation(chain, max_lag.min(chain.len() - 1))?;
        let ess = effective_sample_size(chain)?;
        let m = mean(chain);
        let n = F::from_usize_lossy(chain.len());
        let ss = chain.iter().fold(F::zero(), |acc, &v| acc + (v - m).powi(2));
        let sorted = sorted_copy(chain);
        let q = |p: f64| quantile_sorted(&sorted, F::c(p));
        Ok(Self {
            mean: m,
            median: q(0.5)?,
            sd: (ss / (n - F::one())).sqrt(),
            q025: q(0.025)?,
            q25: q(0.25)?,
            q75: q(0.75)?,
            q975: q(0.975)?,
            ess,
            acf,
        })
    }
}
