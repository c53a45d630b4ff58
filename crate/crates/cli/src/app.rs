use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gompertz_core::bayes::gibbs_fit_seeded;
use gompertz_core::diagnostics::{credible_interval, ChainSummary};
use gompertz_core::mcem::{mcem_fit_seeded, wald_intervals};
use gompertz_core::model::ModelParams;
use gompertz_core::NoiseModel;
use gompertz_sim::{builtin_scenarios, run_study, scenario_by_id, simulate_dataset, Method, Scenario, StudyConfig};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::RunConfig;
use crate::io::{self, ChainTable, SeriesFile};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Model(#[from] gompertz_core::Error),
    #[error(transparent)]
    Study(#[from] gompertz_sim::StudyError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
}

impl AppError {
    fn kind(&self) -> &'static str {
        match self {
            AppError::Io(_) => "io",
            AppError::Model(_) => "model",
            AppError::Study(_) => "study",
            AppError::Config(_) => "config",
            AppError::Invalid(_) => "invalid_argument",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Noise {
    Poisson,
    Negbin,
}

#[derive(Debug, Parser)]
#[command(name = "gompertz", version, about = "Gompertz state-space inference for count series")]
pub struct Cli {
    /// Master random seed [default: config value, else 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true, env = "GOMPERTZ_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output file, or directory for fit-bayes and study [default: stdout or `.`].
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for `study` [default: available cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Retained Gibbs iterations, or the MCEM iteration limit for fit-mle.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Gibbs burn-in, or sweeps discarded per E-step for fit-mle.
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a count series.
    Simulate(SimulateArgs),
    /// Gibbs sampler: chain CSV, summary and ACF table.
    FitBayes {
        series: PathBuf,
    },
    /// Monte Carlo EM: estimates, Louis covariance and Wald intervals.
    FitMle {
        series: PathBuf,
    },
    /// Replicated simulation study over one or more scenarios.
    Study(StudyArgs),
    /// Summaries, ESS and intervals for a chain CSV.
    Diagnose {
        chain: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario id (S1-S8).
    #[arg(long, conflicts_with_all = ["theta1", "theta2", "b", "length", "noise"])]
    pub scenario: Option<String>,
    #[arg(long, required_unless_present = "scenario", allow_hyphen_values = true)]
    pub theta1: Option<f64>,
    #[arg(long, required_unless_present = "scenario")]
    pub theta2: Option<f64>,
    #[arg(long, required_unless_present = "scenario", allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, required_unless_present = "scenario")]
    pub length: Option<usize>,
    #[arg(long, value_enum)]
    pub noise: Option<Noise>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Scenario ids; repeat or comma-separate, or `all`.
    #[arg(long, required = true, value_delimiter = ',')]
    pub scenario: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Gibbs, MethodArg::Mle])]
    pub methods: Vec<MethodArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gibbs,
    Mle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gibbs => Method::Gibbs,
            MethodArg::Mle => Method::Mle,
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code: 0 on
/// success, 2 for usage errors, 1 for runtime failures (with a JSON error on
/// standard error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{report}");
            1
        }
    }
}

struct Context {
    cfg: RunConfig,
    seed: u64,
}

fn context(cli: &Cli) -> Result<Context, AppError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(AppError::Config)?,
        None => RunConfig::default(),
    };
    Ok(Context { seed: cli.seed.unwrap_or(cfg.seed), cfg })
}

pub fn execute(cli: &Cli) -> Result<(), AppError> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Simulate(args) => simulate(cli, &ctx, args),
        Command::FitBayes { series } => fit_bayes(cli, &ctx, series),
        Command::FitMle { series } => fit_mle(cli, &ctx, series),
        Command::Study(args) => study(cli, &ctx, args),
        Command::Diagnose { chain } => diagnose(cli, &ctx, chain),
    }
}

fn simulate(cli: &Cli, ctx: &Context, args: &SimulateArgs) -> Result<(), AppError> {
    let scenario = match &args.scenario {
        Some(id) => scenario_by_id(id).ok_or_else(|| AppError::Invalid(format!("unknown scenario `{id}`")))?,
        None => {
            let params = ModelParams::new(
                args.theta1.expect("required by clap"),
                args.theta2.expect("required by clap"),
                args.b.expect("required by clap"),
            )?;
            let noise = match args.noise.unwrap_or(Noise::Poisson) {
                Noise::Poisson => NoiseModel::Poisson,
                Noise::Negbin => NoiseModel::NegBinomialHalf,
            };
            Scenario { id: "custom".into(), true_params: params, len: args.length.expect("required by clap"), noise }
        }
    };
    let file = SeriesFile::numbered(simulate_dataset(&scenario, ctx.seed)?);
    match cli.format {
        Format::Csv => io::write_series_csv(cli.output.as_deref(), &file)?,
        Format::Json => io::write_json(
            cli.output.as_deref(),
            &json!({
                "scenario": scenario,
                "seed": ctx.seed,
                "labels": file.labels,
                "counts": file.series.counts(),
            }),
        )?,
    }
    Ok(())
}

/// Per-parameter chain summary with an equal-tailed interval.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub name: &'static str,
    #[serde(flatten)]
    pub summary: ChainSummary<f64>,
    pub level: f64,
    pub low: f64,
    pub high: f64,
}

fn summarize(chain: &ChainTable, level: f64, max_lag: usize) -> Result<Vec<ParamSummary>, AppError> {
    let mut out = Vec::with_capacity(3);
    for (name, col) in gompertz_sim::PARAM_NAMES.into_iter().zip(chain.columns()) {
        let summary = ChainSummary::from_chain(col, max_lag)?;
        let (low, high) = credible_interval(col, level)?;
        out.push(ParamSummary { name, summary, level, low, high });
    }
    Ok(out)
}

const SUMMARY_HEADER: [&str; 12] =
    ["param", "mean", "median", "sd", "q025", "q25", "q75", "q975", "ess", "level", "low", "high"];

fn summary_rows(summaries: &[ParamSummary]) -> Vec<Vec<String>> {
    summaries
        .iter()
        .map(|p| {
            let s = &p.summary;
            let mut row = vec![p.name.to_string()];
            row.extend([s.mean, s.median, s.sd, s.q025, s.q25, s.q75, s.q975, s.ess, p.level, p.low, p.high].map(io::fmt_f64));
            row
        })
        .collect()
}

fn output_dir(cli: &Cli) -> Result<PathBuf, AppError> {
    let dir = cli.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|source| AppError::Io(io::IoError::Write { path: dir.clone(), source }))?;
    Ok(dir)
}

fn fit_bayes(cli: &Cli, ctx: &Context, series: &Path) -> Result<(), AppError> {
    let file = io::load_series_csv(series)?;
    let mut gibbs = ctx.cfg.gibbs;
    if let Some(n) = cli.iterations {
        gibbs.iterations = n;
    }
    if let Some(n) = cli.burnin {
        gibbs.burn_in = n;
    }
    if gibbs.iterations < 2 {
        return Err(AppError::Invalid("at least 2 retained iterations are required".into()));
    }
    let chain = gibbs_fit_seeded::<f64>(&file.series, &ctx.cfg.prior, &gibbs, ctx.seed)?;
    let table = ChainTable::from_chain(&chain);
    let params = summarize(&table, ctx.cfg.level, ctx.cfg.max_lag)?;
    let secs = chain.wall_time.as_secs_f64();

    let dir = output_dir(cli)?;
    io::write_chain_csv(Some(&dir.join("chain.csv")), &table)?;
    let acfs: Vec<(&str, &[f64])> = params.iter().map(|p| (p.name, p.summary.acf.as_slice())).collect();
    io::write_table(Some(&dir.join("acf.csv")), &io::ACF_HEADER, &io::acf_rows(&acfs, "gibbs"))?;
    match cli.format {
        Format::Json => io::write_json(
            Some(&dir.join("summary.json")),
            &json!({
                "method": "gibbs",
                "series": series.display().to_string(),
                "n_obs": file.series.len(),
                "seed": ctx.seed,
                "iterations": gibbs.iterations,
                "burn_in": gibbs.burn_in,
                "prior": ctx.cfg.prior,
                "b_attempts_mean": chain.b_attempts_mean,
                "parameters": params,
                "timing": {
                    "wall_time_secs": secs,
                    "ess_per_sec": params.iter().map(|p| p.summary.ess / secs.max(f64::MIN_POSITIVE)).collect::<Vec<_>>(),
                },
            }),
        )?,
        Format::Csv => io::write_table(Some(&dir.join("summary.csv")), &SUMMARY_HEADER, &summary_rows(&params))?,
    }
    Ok(())
}

fn fit_mle(cli: &Cli, ctx: &Context, series: &Path) -> Result<(), AppError> {
    let file = io::load_series_csv(series)?;
    let mut mcem = ctx.cfg.mcem;
    if let Some(n) = cli.iterations {
        mcem.max_iterations = n;
    }
    if let Some(n) = cli.burnin {
        mcem.burn_in = n;
    }
    let fit = mcem_fit_seeded::<f64>(&file.series, &mcem, ctx.seed)?;
    let intervals = wald_intervals(&fit, ctx.cfg.level)?;
    let se = fit.standard_errors();
    let theta = fit.theta_hat.to_array();
    match cli.format {
        Format::Json => {
            let estimates: Vec<_> = (0..3)
                .map(|k| {
                    json!({
                        "name": gompertz_sim::PARAM_NAMES[k],
                        "estimate": theta[k],
                        "se": se[k],
                        "low": intervals[k].0,
                        "high": intervals[k].1,
                    })
                })
                .collect();
            io::write_json(
                cli.output.as_deref(),
                &json!({
                    "method": "mle",
                    "series": series.display().to_string(),
                    "n_obs": file.series.len(),
                    "seed": ctx.seed,
                    "level": ctx.cfg.level,
                    "mcem": mcem,
                    "parameters": estimates,
                    "covariance": fit.covariance,
                    "information_positive_definite": fit.information_positive_definite,
                    "converged": fit.converged,
                    "iterations": fit.iterations,
                    "final_j": fit.final_j,
                    "trace": fit.trace,
                    "timing": { "wall_time_secs": fit.wall_time.as_secs_f64() },
                }),
            )?;
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = (0..3)
                .map(|k| {
                    vec![
                        gompertz_sim::PARAM_NAMES[k].to_string(),
                        io::fmt_f64(theta[k]),
                        io::fmt_f64(se[k]),
                        io::fmt_f64(intervals[k].0),
                        io::fmt_f64(intervals[k].1),
                    ]
                })
                .collect();
            io::write_table(cli.output.as_deref(), &["param", "estimate", "se", "low", "high"], &rows)?;
        }
    }
    Ok(())
}

fn study(cli: &Cli, ctx: &Context, args: &StudyArgs) -> Result<(), AppError> {
    let scenarios: Vec<Scenario> = if args.scenario.iter().any(|s| s.eq_ignore_ascii_case("all")) {
        builtin_scenarios()
    } else {
        args.scenario
            .iter()
            .map(|id| scenario_by_id(id).ok_or_else(|| AppError::Invalid(format!("unknown scenario `{id}`"))))
            .collect::<Result<_, _>>()?
    };
    let mut methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    methods.sort();
    methods.dedup();
    let mut cfg = StudyConfig { gibbs: ctx.cfg.gibbs, mcem: ctx.cfg.mcem, prior: ctx.cfg.prior, level: ctx.cfg.level };
    if let Some(n) = cli.iterations {
        cfg.gibbs.iterations = n;
    }
    if let Some(n) = cli.burnin {
        cfg.gibbs.burn_in = n;
    }
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let mut summaries = Vec::with_capacity(scenarios.len());
    let mut rows = Vec::new();
    for s in &scenarios {
        let (summary, results) = run_study(s, args.reps, &methods, ctx.seed, workers, &cfg)?;
        summaries.push(summary);
        rows.extend(results);
    }

    let dir = output_dir(cli)?;
    match cli.format {
        Format::Json => io::write_json(
            Some(&dir.join("summary.json")),
            &json!({
                "seed": ctx.seed,
                "reps": args.reps,
                "methods": methods,
                "config": cfg,
                "scenarios": summaries,
            }),
        )?,
        Format::Csv => {
            io::write_table(Some(&dir.join("summary.csv")), &io::ACCURACY_HEADER, &io::accuracy_rows(&summaries))?
        }
    }
    io::write_table(Some(&dir.join("replicates.csv")), &io::REPLICATE_HEADER, &io::replicate_rows(&rows))?;
    io::write_table(Some(&dir.join("mse.csv")), &io::MSE_HEADER, &io::mse_rows(&summaries))?;
    io::write_table(Some(&dir.join("coverage.csv")), &io::COVERAGE_HEADER, &io::coverage_rows(&summaries))?;
    io::write_table(Some(&dir.join("timing.csv")), &io::TIMING_HEADER, &io::timing_rows(&summaries))?;
    Ok(())
}

fn diagnose(cli: &Cli, ctx: &Context, chain: &Path) -> Result<(), AppError> {
    let table = io::read_chain_csv(chain)?;
    let params = summarize(&table, ctx.cfg.level, ctx.cfg.max_lag)?;
    match cli.format {
        Format::Json => io::write_json(
            cli.output.as_deref(),
            &json!({ "chain": chain.display().to_string(), "draws": table.len(), "parameters": params }),
        )?,
        Format::Csv => io::write_table(cli.output.as_deref(), &SUMMARY_HEADER, &summary_rows(&params))?,
    }
    Ok(())
}
