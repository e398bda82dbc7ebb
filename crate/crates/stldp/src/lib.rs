//! Configuration-driven experiment runner for `stldp-core`: strict TOML
//! configs, JSON/CSV outputs with 17 significant digits, binary path records,
//! run manifests and reports.

pub mod config;
pub mod error;
pub mod numfmt;
pub mod parallel;
pub mod pathio;
pub mod registry;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{Result, RunError};
pub use parallel::Pool;
pub use runner::{run, RunManifest};
