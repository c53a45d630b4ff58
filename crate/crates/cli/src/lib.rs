//! Command-line front end: series ingestion, fitting, studies and result
//! persistence.

pub mod app;
pub mod config;
pub mod io;

pub use app::{run, AppError, Cli};
pub use config::RunConfig;
