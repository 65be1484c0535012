//! `sdvar`: ingestion, configuration and workflows around the `sdsvar` core.

pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod workflow;

pub use error::{CliError, Result};
pub use workflow::{run, Command};
