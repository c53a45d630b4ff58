//! Replicated simulation studies for the Gompertz count-model estimators.
//!
//! A study simulates `n_reps` independent series from one [`Scenario`], fits
//! each requested [`Method`] and reduces the results to MSE, interval
//! coverage, effective sample sizes and timing summaries. Every replicate is
//! seeded from `(master_seed, scenario id, index)` alone, so results do not
//! depend on the number of worker threads.

mod scenario;
mod seed;
mod study;

pub use scenario::{builtin_scenarios, scenario_by_id, Scenario};
pub use seed::{replicate_seed, stream_seed};
pub use study::{
    aggregate_study, run_replicate, run_study, simulate_dataset, Method, MethodAccuracy, MethodTiming,
    ParamAccuracy, ParamEstimate, ReplicateResult, StudyConfig, StudySummary, PARAM_NAMES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("a study needs at least one replicate")]
    NoReplicates,
    #[error("no results to aggregate")]
    NoResults,
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Model(#[from] gompertz_core::Error),
}
