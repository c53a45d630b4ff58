//! Tabulated CDFs and chi-square goodness of fit for sampler checks.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Tabulated CDF of `exp(log_density)` on `[lo, hi]` by the trapezoid rule.
pub struct GridCdf {
    pub x: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> Self {
        let h = (hi - lo) / k as f64;
        let x: Vec<f64> = (0..=k).map(|i| lo + i as f64 * h).collect();
        let logs: Vec<f64> = x.iter().map(|&v| log_density(v)).collect();
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let mut cdf = vec![0.0; k + 1];
        for i in 1..=k {
            cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        }
        let total = cdf[k];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { x, cdf }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < p).clamp(1, self.x.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        self.x[i - 1] + t * (self.x[i] - self.x[i - 1])
    }
}

/// Chi-square p-value of `draws` against equal-probability bins of `cdf`.
pub fn chi_square_p(draws: &[f64], cdf: &GridCdf, bins: usize) -> f64 {
    let edges: Vec<f64> = (1..bins).map(|i| cdf.quantile(i as f64 / bins as f64)).collect();
    let mut counts = vec![0usize; bins];
    for &d in draws {
        counts[edges.partition_point(|&e| e < d)] += 1;
    }
    let expected = draws.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}
