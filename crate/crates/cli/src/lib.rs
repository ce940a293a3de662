//! Command-line front end: scenario files, subcommands and result tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::Mode;
pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
