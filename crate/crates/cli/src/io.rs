//! File formats: count series and chains as CSV, summaries as JSON, and tidy
//! plot-data tables.
//!
//! Floating-point values in CSV files are written with 17 significant digits
//! (`{:.16e}`) so that reading a file back reproduces every value exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gompertz_core::bayes::PosteriorChain;
use gompertz_core::ObservedSeries;
use gompertz_sim::{ReplicateResult, StudySummary, PARAM_NAMES};
use serde::Serialize;
use thiserror::Error;

pub const SERIES_HEADER: [&str; 2] = ["label", "count"];
pub const CHAIN_HEADER: [&str; 4] = ["iteration", "theta1", "theta2", "b"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path}: fewer than 2 observations (found {found})")]
    TooFew { path: PathBuf, found: usize },
    #[error("{path}: chain has no rows")]
    EmptyChain { path: PathBuf },
}

/// A count series with the labels from its source file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFile {
    pub labels: Vec<String>,
    pub series: ObservedSeries,
}

impl SeriesFile {
    /// Labels `1..=T`.
    pub fn numbered(series: ObservedSeries) -> Self {
        let labels = (1..=series.len()).map(|t| t.to_string()).collect();
        Self { labels, series }
    }
}

/// Retained draws as read from or written to a chain CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub b: Vec<f64>,
}

impl ChainTable {
    pub fn from_chain(chain: &PosteriorChain<f64>) -> Self {
        Self { theta1: chain.theta1.clone(), theta2: chain.theta2.clone(), b: chain.b.clone() }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn columns(&self) -> [&[f64]; 3] {
        [&self.theta1, &self.theta2, &self.b]
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(file))
}

fn csv_parse_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Parse { path: path.to_path_buf(), line, message: e.to_string() }
}

fn check_header(path: &Path, record: &csv::StringRecord, expected: &[&str]) -> Result<(), IoError> {
    if record.iter().ne(expected.iter().copied()) {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: record.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn field_count(path: &Path, line: u64, record: &csv::StringRecord, n: usize) -> Result<(), IoError> {
    if record.len() != n {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected {n} fields, found {}", record.len()),
        });
    }
    Ok(())
}

/// Reads a `label,count` file. Counts must be nonnegative integers and at
/// least two rows are required.
pub fn load_series_csv(path: &Path) -> Result<SeriesFile, IoError> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    match records.next() {
        None => return Err(IoError::TooFew { path: path.to_path_buf(), found: 0 }),
        Some(header) => check_header(path, &header.map_err(|e| csv_parse_error(path, e))?, &SERIES_HEADER)?,
    }
    for record in records {
        let record = record.map_err(|e| csv_parse_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        field_count(path, line, &record, 2)?;
        let count = record[1].parse::<u64>().map_err(|_| IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("count `{}` is not a nonnegative integer", &record[1]),
        })?;
        labels.push(record[0].to_string());
        counts.push(count);
    }
    let found = counts.len();
    let series = ObservedSeries::new(counts).map_err(|_| IoError::TooFew { path: path.to_path_buf(), found })?;
    Ok(SeriesFile { labels, series })
}

/// Output sink: a file, or standard output when the path is `None`.
pub struct Sink {
    path: PathBuf,
    inner: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, IoError> {
        match path {
            Some(p) => {
                let file = File::create(p).map_err(|source| IoError::Write { path: p.to_path_buf(), source })?;
                Ok(Self { path: p.to_path_buf(), inner: Box::new(BufWriter::new(file)) })
            }
            None => Ok(Self { path: PathBuf::from("<stdout>"), inner: Box::new(std::io::stdout().lock()) }),
        }
    }

    fn err(&self, source: std::io::Error) -> IoError {
        IoError::Write { path: self.path.clone(), source }
    }

    pub fn line(&mut self, text: &str) -> Result<(), IoError> {
        writeln!(self.inner, "{text}").map_err(|e| self.err(e))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), IoError> {
        serde_json::to_writer_pretty(&mut self.inner, value).map_err(|e| self.err(e.into()))?;
        self.line("")
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.inner.flush().map_err(|e| self.err(e))
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_series_csv(path: Option<&Path>, file: &SeriesFile) -> Result<(), IoError> {
    let mut out = Sink::open(path)?;
    out.line(&SERIES_HEADER.join(","))?;
    for (label, count) in file.labels.iter().zip(file.series.counts()) {
        out.line(&format!("{label},{count}"))?;
    }
    out.finish()
}

pub fn write_chain_csv(path: Option<&Path>, chain: &ChainTable) -> Result<(), IoError> {
    let mut out = Sink::open(path)?;
    out.line(&CHAIN_HEADER.join(","))?;
    for i in 0..chain.len() {
        out.line(&format!(
            "{},{},{},{}",
            i + 1,
            fmt_f64(chain.theta1[i]),
            fmt_f64(chain.theta2[i]),
            fmt_f64(chain.b[i])
        ))?;
    }
    out.finish()
}

pub fn read_chain_csv(path: &Path) -> Result<ChainTable, IoError> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    match records.next() {
        None => return Err(IoError::EmptyChain { path: path.to_path_buf() }),
        Some(header) => check_header(path, &header.map_err(|e| csv_parse_error(path, e))?, &CHAIN_HEADER)?,
    }
    let mut table = ChainTable { theta1: Vec::new(), theta2: Vec::new(), b: Vec::new() };
    for record in records {
        let record = record.map_err(|e| csv_parse_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        field_count(path, line, &record, 4)?;
        let mut values = [0.0; 3];
        for (k, v) in values.iter_mut().enumerate() {
            let text = &record[k + 1];
            *v = text.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{text}` is not a finite number"),
            })?;
        }
        table.theta1.push(values[0]);
        table.theta2.push(values[1]);
        table.b.push(values[2]);
    }
    if table.is_empty() {
        return Err(IoError::EmptyChain { path: path.to_path_buf() });
    }
    Ok(table)
}

pub fn write_json<T: Serialize + ?Sized>(path: Option<&Path>, value: &T) -> Result<(), IoError> {
    let mut out = Sink::open(path)?;
    out.json(value)?;
    out.finish()
}

/// Writes `header` followed by one comma-joined line per row.
pub fn write_table(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut out = Sink::open(path)?;
    out.line(&header.join(","))?;
    for row in rows {
        out.line(&row.join(","))?;
    }
    out.finish()
}

fn method_tag(m: gompertz_sim::Method) -> &'static str {
    match m {
        gompertz_sim::Method::Gibbs => "gibbs",
        gompertz_sim::Method::Mle => "mle",
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One row per scenario, method and parameter: mean MSE with its 5th and
/// 95th percentile bars.
pub fn mse_rows(summaries: &[StudySummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in summaries {
        for acc in &s.accuracy {
            for p in &acc.params {
                rows.push(vec![
                    s.scenario.clone(),
                    method_tag(acc.method).into(),
                    p.name.clone(),
                    fmt_f64(p.mse),
                    fmt_f64(p.mse_p5),
                    fmt_f64(p.mse_p95),
                ]);
            }
        }
    }
    rows
}
pub const MSE_HEADER: [&str; 6] = ["scenario", "method", "param", "mean", "p5", "p95"];

pub fn coverage_rows(summaries: &[StudySummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in summaries {
        for acc in &s.accuracy {
            for p in &acc.params {
                rows.push(vec![
                    s.scenario.clone(),
                    method_tag(acc.method).into(),
                    p.name.clone(),
                    fmt_f64(p.coverage),
                    acc.n_ok.to_string(),
                ]);
            }
        }
    }
    rows
}
pub const COVERAGE_HEADER: [&str; 5] = ["scenario", "method", "param", "coverage", "n"];

pub fn timing_rows(summaries: &[StudySummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in summaries {
        for t in &s.timing {
            rows.push(vec![
                s.scenario.clone(),
                method_tag(t.method).into(),
                fmt_f64(t.q1),
                fmt_f64(t.mean),
                fmt_f64(t.median),
                fmt_f64(t.q3),
            ]);
        }
    }
    rows
}
pub const TIMING_HEADER: [&str; 6] = ["scenario", "method", "q1_min", "mean_min", "median_min", "q3_min"];

/// Flat accuracy table, the CSV form of a study summary.
pub fn accuracy_rows(summaries: &[StudySummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in summaries {
        for acc in &s.accuracy {
            for p in &acc.params {
                rows.push(vec![
                    s.scenario.clone(),
                    method_tag(acc.method).into(),
                    p.name.clone(),
                    fmt_f64(p.mse),
                    fmt_f64(p.mse_p5),
                    fmt_f64(p.mse_p95),
                    fmt_f64(p.coverage),
                    opt(p.mean_ess),
                    acc.n_ok.to_string(),
                    acc.n_failed.to_string(),
                    acc.n_unconverged.to_string(),
                ]);
            }
        }
    }
    rows
}
pub const ACCURACY_HEADER: [&str; 11] = [
    "scenario", "method", "param", "mse", "mse_p5", "mse_p95", "coverage", "mean_ess", "n_ok", "n_failed",
    "n_unconverged",
];

/// Per-replicate estimates; wall times are left to the timing table.
pub fn replicate_rows(results: &[ReplicateResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for k in 0..3 {
            let e = r.estimates.map(|e| e[k]);
            rows.push(vec![
                r.scenario.clone(),
                r.index.to_string(),
                method_tag(r.method).into(),
                r.seed.to_string(),
                PARAM_NAMES[k].into(),
                opt(e.map(|e| e.point)),
                opt(e.map(|e| e.low)),
                opt(e.map(|e| e.high)),
                opt(r.ess.map(|s| s[k])),
                r.converged.map(|c| c.to_string()).unwrap_or_default(),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ]);
        }
    }
    rows
}
pub const REPLICATE_HEADER: [&str; 11] =
    ["scenario", "index", "method", "seed", "param", "point", "low", "high", "ess", "converged", "error"];

/// ACF curves in long form.
pub fn acf_rows(acfs: &[(&str, &[f64])], group: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (name, acf) in acfs {
        for (lag, v) in acf.iter().enumerate() {
            rows.push(vec![group.to_string(), name.to_string(), lag.to_string(), fmt_f64(*v)]);
        }
    }
    rows
}
pub const ACF_HEADER: [&str; 4] = ["group", "param", "lag", "acf"];
