use std::time::Instant;

use gompertz_core::bayes::{gibbs_fit_seeded, GibbsConfig, PriorHyper};
use gompertz_core::diagnostics::{credible_interval, effective_sample_size, mse_and_coverage, quantiles};
use gompertz_core::mcem::{mcem_fit_seeded, wald_intervals, McemConfig};
use gompertz_core::model::{simulate_latent, simulate_observations, ModelParams};
use gompertz_core::ObservedSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{replicate_seed, stream_seed};
use crate::{Scenario, StudyError};

pub const PARAM_NAMES: [&str; 3] = ["theta1", "theta2", "b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gibbs,
    Mle,
}

impl Method {
    fn stream(self) -> u64 {
        match self {
            Method::Gibbs => 1,
            Method::Mle => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub gibbs: GibbsConfig,
    pub mcem: McemConfig,
    pub prior: PriorHyper<f64>,
    /// Nominal level of credible and confidence intervals.
    pub level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { gibbs: GibbsConfig::default(), mcem: McemConfig::default(), prior: PriorHyper::default(), level: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub point: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub scenario: String,
    pub index: u64,
    pub method: Method,
    pub seed: u64,
    /// `None` when the fit failed; see `error`.
    pub estimates: Option<[ParamEstimate; 3]>,
    pub ess: Option<[f64; 3]>,
    pub converged: Option<bool>,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

/// Simulates the replicate's series from sub-stream 0 of its seed.
pub fn simulate_dataset(s: &Scenario, seed: u64) -> gompertz_core::Result<ObservedSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    let z = simulate_latent(&s.true_params, s.len, &mut rng)?;
    simulate_observations(&z, s.noise, &mut rng)
}

fn fit_gibbs(n: &ObservedSeries, cfg: &StudyConfig, seed: u64) -> gompertz_core::Result<([ParamEstimate; 3], [f64; 3])> {
    let chain = gibbs_fit_seeded::<f64>(n, &cfg.prior, &cfg.gibbs, seed)?;
    let mut est = [ParamEstimate { point: 0.0, low: 0.0, high: 0.0 }; 3];
    let mut ess = [0.0; 3];
    for (k, col) in chain.columns().into_iter().enumerate() {
        let (low, high) = credible_interval(col, cfg.level)?;
        est[k] = ParamEstimate { point: col.iter().sum::<f64>() / col.len() as f64, low, high };
        ess[k] = effective_sample_size(col)?;
    }
    Ok((est, ess))
}

fn fit_mle(n: &ObservedSeries, cfg: &StudyConfig, seed: u64) -> gompertz_core::Result<([ParamEstimate; 3], bool)> {
    let fit = mcem_fit_seeded::<f64>(n, &cfg.mcem, seed)?;
    let iv = wald_intervals(&fit, cfg.level)?;
    let x = fit.theta_hat.to_array();
    let est = [0, 1, 2].map(|k| ParamEstimate { point: x[k], low: iv[k].0, high: iv[k].1 });
    Ok((est, fit.converged))
}

/// Simulates replicate `index` and fits each method in `methods`, in order.
/// Fit failures are recorded in the result rather than returned.
pub fn run_replicate(
    s: &Scenario,
    index: u64,
    methods: &[Method],
    master_seed: u64,
    cfg: &StudyConfig,
) -> Vec<ReplicateResult> {
    let seed = replicate_seed(master_seed, &s.id, index);
    let base = ReplicateResult {
        scenario: s.id.clone(),
        index,
        method: Method::Gibbs,
        seed,
        estimates: None,
        ess: None,
        converged: None,
        error: None,
        wall_time_secs: 0.0,
    };
    let data = simulate_dataset(s, seed);
    methods
        .iter()
        .map(|&method| {
            let mut r = ReplicateResult { method, ..base.clone() };
            let n = match &data {
                Ok(n) => n,
                Err(e) => {
                    r.error = Some(format!("simulation: {e}"));
                    return r;
                }
            };
            let fit_seed = stream_seed(seed, method.stream());
            let start = Instant::now();
            match method {
                Method::Gibbs => match fit_gibbs(n, cfg, fit_seed) {
                    Ok((est, ess)) => {
                        r.estimates = Some(est);
                        r.ess = Some(ess);
                    }
                    Err(e) => r.error = Some(e.to_string()),
                },
                Method::Mle => match fit_mle(n, cfg, fit_seed) {
                    Ok((est, converged)) => {
                        r.estimates = Some(est);
                        r.converged = Some(converged);
                    }
                    Err(e) => r.error = Some(e.to_string()),
                },
            }
            r.wall_time_secs = start.elapsed().as_secs_f64();
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamAccuracy {
    pub name: String,
    pub mse: f64,
    /// 5th and 95th percentiles of the squared errors.
    pub mse_p5: f64,
    pub mse_p95: f64,
    pub coverage: f64,
    pub mean_ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodAccuracy {
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    /// MLE fits that stopped at the iteration limit.
    pub n_unconverged: usize,
    pub params: Vec<ParamAccuracy>,
}

/// Wall-time summary in minutes, plus mean effective samples per second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTiming {
    pub method: Method,
    pub q1: f64,
    pub mean: f64,
    pub median: f64,
    pub q3: f64,
    pub ess_per_sec: Option<[f64; 3]>,
}

/// Accuracy and timing per method. `accuracy` is a deterministic function of
/// the study inputs; `timing` depends on the machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub scenario: String,
    pub n_reps: usize,
    pub truth: [f64; 3],
    pub accuracy: Vec<MethodAccuracy>,
    pub timing: Vec<MethodTiming>,
}

fn percentile_pair(x: &[f64]) -> (f64, f64) {
    let q = quantiles(x, &[0.05, 0.95]).expect("nonempty sample");
    (q[0], q[1])
}

/// Groups results by method and reduces them against the true parameters.
pub fn aggregate_study(results: &[ReplicateResult], truths: &ModelParams<f64>) -> Result<StudySummary, StudyError> {
    let first = results.first().ok_or(StudyError::NoResults)?;
    let truth = truths.to_array();
    let mut methods: Vec<Method> = results.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut accuracy = Vec::new();
    let mut timing = Vec::new();
    for method in methods {
        // Sorting by index makes every reduction independent of input order.
        let mut rows: Vec<&ReplicateResult> = results.iter().filter(|r| r.method == method).collect();
        rows.sort_by_key(|r| (r.index, r.scenario.clone()));
        let ok: Vec<&ReplicateResult> = rows.iter().copied().filter(|r| r.estimates.is_some()).collect();
        let n_failed = rows.len() - ok.len();
        let n_unconverged = ok.iter().filter(|r| r.converged == Some(false)).count();
        let mut params = Vec::new();
        if !ok.is_empty() {
            for k in 0..3 {
                let est: Vec<(f64, f64, f64)> = ok
                    .iter()
                    .map(|r| {
                        let e = r.estimates.expect("filtered")[k];
                        (e.point, e.low, e.high)
                    })
                    .collect();
                let (mse, coverage) = mse_and_coverage(&est, truth[k])?;
                let sq: Vec<f64> = est.iter().map(|e| (e.0 - truth[k]).powi(2)).collect();
                let (mse_p5, mse_p95) = percentile_pair(&sq);
                let ess: Vec<f64> = ok.iter().filter_map(|r| r.ess.map(|e| e[k])).collect();
                let mean_ess = (!ess.is_empty()).then(|| ess.iter().sum::<f64>() / ess.len() as f64);
                params.push(ParamAccuracy { name: PARAM_NAMES[k].to_string(), mse, mse_p5, mse_p95, coverage, mean_ess });
            }
        }
        accuracy.push(MethodAccuracy { method, n_ok: ok.len(), n_failed, n_unconverged, params });

        let minutes: Vec<f64> = rows.iter().map(|r| r.wall_time_secs / 60.0).collect();
        let q = quantiles(&minutes, &[0.25, 0.5, 0.75])?;
        let per_sec: Vec<[f64; 3]> = ok
            .iter()
            .filter_map(|r| r.ess.map(|e| e.map(|v| v / r.wall_time_secs.max(f64::MIN_POSITIVE))))
            .collect();
        let ess_per_sec = (!per_sec.is_empty()).then(|| {
            [0, 1, 2].map(|k| per_sec.iter().map(|e| e[k]).sum::<f64>() / per_sec.len() as f64)
        });
        timing.push(MethodTiming {
            method,
            q1: q[0],
            mean: minutes.iter().sum::<f64>() / minutes.len() as f64,
            median: q[1],
            q3: q[2],
            ess_per_sec,
        });
    }
    Ok(StudySummary { scenario: first.scenario.clone(), n_reps: rows_per_method(results), truth, accuracy, timing })
}

fn rows_per_method(results: &[ReplicateResult]) -> usize {
    let mut idx: Vec<u64> = results.iter().map(|r| r.index).collect();
    idx.sort_unstable();
    idx.dedup();
    idx.len()
}

/// Runs replicates `0..n_reps` on a pool of `workers` threads and aggregates
/// them. Returns the per-replicate rows alongside the summary.
pub fn run_study(
    s: &Scenario,
    n_reps: usize,
    methods: &[Method],
    master_seed: u64,
    workers: usize,
    cfg: &StudyConfig,
) -> Result<(StudySummary, Vec<ReplicateResult>), StudyError> {
    if n_reps == 0 {
        return Err(StudyError::NoReplicates);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))?;
    let per_rep: Vec<Vec<ReplicateResult>> = pool.install(|| {
        (0..n_reps as u64).into_par_iter().map(|i| run_replicate(s, i, methods, master_seed, cfg)).collect()
    });
    let rows: Vec<ReplicateResult> = per_rep.into_iter().flatten().collect();
    let summary = aggregate_study(&rows, &s.true_params)?;
    Ok((summary, rows))
}
