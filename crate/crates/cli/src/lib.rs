//! Command-line front end: CSV ingestion through a manifest, command
//! dispatch and JSON reports.
mod app;
pub mod data;
mod error;
pub mod report;

pub use app::run;
pub use error::CliError;
