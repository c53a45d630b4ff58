//! Tensor-grid quadrature for two-observation problems, where the latent
//! posterior, the observed-data likelihood and the Bayesian posterior can all
//! be integrated numerically.
#![allow(dead_code)]

use gompertz_core::ar1::ArSuffStats;
use gompertz_core::bayes::{log_marginal_b, theta1_conditional, theta2_conditional, PriorHyper};
use gompertz_core::model::{complete_data_loglik, LatentTrajectory, ModelParams};
use statrs::function::gamma::ln_gamma;

/// Fixed trapezoid grid on `[lo, hi]^2`; fixed so that integrals are smooth in `theta`.
#[derive(Debug, Clone)]
pub struct Grid2 {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid2 {
    pub fn new(lo: f64, hi: f64, k: usize) -> Self {
        let h = (hi - lo) / k as f64;
        let nodes = (0..=k).map(|i| lo + i as f64 * h).collect();
        let weights = (0..=k).map(|i| if i == 0 || i == k { 0.5 * h } else { h }).collect();
        Self { nodes, weights }
    }
}

pub fn log_poisson(n: u64, z: f64) -> f64 {
    n as f64 * z - z.exp() - ln_gamma(n as f64 + 1.0)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log joint density of `(N*, Z)` at every grid node, with the node weight folded in.
fn log_joint_weighted(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(g.nodes.len() * g.nodes.len());
    for (i, &z1) in g.nodes.iter().enumerate() {
        for (j, &z2) in g.nodes.iter().enumerate() {
            let lc = complete_data_loglik(&LatentTrajectory::new(vec![z1, z2]).unwrap(), p);
            let lw = log_poisson(n[0], z1) + log_poisson(n[1], z2) + lc + (g.weights[i] * g.weights[j]).ln();
            out.push((z1, z2, lw));
        }
    }
    out
}

/// Observed-data log-likelihood `log pi(N* | theta)`.
pub fn log_likelihood(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2) -> f64 {
    let v: Vec<f64> = log_joint_weighted(n, p, g).iter().map(|t| t.2).collect();
    log_sum_exp(&v)
}

/// Posterior expectation of `f(z1, z2)` given `N*` at `theta`.
pub fn posterior_expectation(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2, f: impl Fn(f64, f64) -> f64) -> f64 {
    let nodes = log_joint_weighted(n, p, g);
    let lz = log_sum_exp(&nodes.iter().map(|t| t.2).collect::<Vec<_>>());
    nodes.iter().map(|&(a, b, lw)| (lw - lz).exp() * f(a, b)).sum()
}

/// Posterior probabilities on the grid cells, for histogram comparisons.
pub fn posterior_cell_masses(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2) -> Vec<(f64, f64, f64)> {
    let nodes = log_joint_weighted(n, p, g);
    let lz = log_sum_exp(&nodes.iter().map(|t| t.2).collect::<Vec<_>>());
    nodes.into_iter().map(|(a, b, lw)| (a, b, (lw - lz).exp())).collect()
}

/// Expected unshifted AR(1) sums under the latent posterior; since the
/// complete-data log-likelihood is linear in them, maximizing at these sums is
/// the exact EM update.
pub fn expected_stats(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2) -> ArSuffStats<f64> {
    let e = |f: &dyn Fn(f64, f64) -> f64| posterior_expectation(n, p, g, f);
    let s1 = e(&|a, _| a);
    let s2 = e(&|_, b| b);
    let q1 = e(&|a, _| a * a);
    let q2 = e(&|_, b| b * b);
    let c = e(&|a, b| a * b);
    ArSuffStats { len: 2, sum: s1 + s2, inner_sum: 0.0, sum_sq: q1 + q2, inner_sum_sq: 0.0, lag_cross: c }
}

/// Observed information `-d^2 log pi(N* | theta)` by central differences.
pub fn observed_information_fd(n: [u64; 2], p: &ModelParams<f64>, g: &Grid2, h: f64) -> [[f64; 3]; 3] {
    let x = p.to_array();
    let f = |d: [f64; 3]| {
        let q = ModelParams::new(x[0] + d[0], x[1] + d[1], x[2] + d[2]).unwrap();
        log_likelihood(n, &q, g)
    };
    let mut out = [[0.0; 3]; 3];
    let f0 = f([0.0; 3]);
    for i in 0..3 {
        for j in i..3 {
            let mut e = [[0.0; 3]; 4];
            e[0][i] += h;
            e[0][j] += h;
            e[1][i] += h;
            e[1][j] -= h;
            e[2][i] -= h;
            e[2][j] += h;
            e[3][i] -= h;
            e[3][j] -= h;
            let v = if i == j {
                let mut up = [0.0; 3];
                let mut dn = [0.0; 3];
                up[i] = h;
                dn[i] = -h;
                (f(up) - 2.0 * f0 + f(dn)) / (h * h)
            } else {
                (f(e[0]) - f(e[1]) - f(e[2]) + f(e[3])) / (4.0 * h * h)
            };
            out[i][j] = -v;
            out[j][i] = -v;
        }
    }
    out
}

/// Posterior means of `(theta1, theta2, b)` under the conjugate prior: a grid
/// over `(z1, z2, b)` with `theta1` and `theta2` integrated analytically.
pub fn bayes_posterior_means(n: [u64; 2], prior: &PriorHyper<f64>, g: &Grid2, b_nodes: usize) -> [f64; 3] {
    let hb = 2.0 / b_nodes as f64;
    let mut logs = Vec::new();
    let mut vals = Vec::new();
    for (i, &z1) in g.nodes.iter().enumerate() {
        for (j, &z2) in g.nodes.iter().enumerate() {
            let stats = ArSuffStats::from_slice(&[z1, z2], prior.eta1).unwrap();
            let base = log_poisson(n[0], z1) + log_poisson(n[1], z2) + (g.weights[i] * g.weights[j]).ln();
            // Midpoint rule in b; the density vanishes at both ends.
            for k in 0..b_nodes {
                let b = -2.0 + (k as f64 + 0.5) * hb;
                let lm = log_marginal_b(b, &stats, prior).unwrap();
                let (t1, _) = theta1_conditional(1.0, b, &stats, prior).unwrap();
                let (shape, scale) = theta2_conditional(b, &stats, prior).unwrap();
                logs.push(base + lm);
                vals.push([t1, scale / (shape - 1.0), b]);
            }
        }
    }
    let lz = log_sum_exp(&logs);
    let mut out = [0.0; 3];
    for (l, v) in logs.iter().zip(&vals) {
        let w = (l - lz).exp();
        for k in 0..3 {
            out[k] += w * v[k];
        }
    }
    out
}
