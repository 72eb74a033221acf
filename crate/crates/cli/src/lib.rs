//! Command-line front end: configuration, experiment drivers, reports and
//! field dumps.

pub mod commands;
pub mod config;
pub mod error;
pub mod psi;
pub mod report;

pub use config::{Command, RunConfig, Settings};
pub use error::CliError;
pub use report::ReportFile;
