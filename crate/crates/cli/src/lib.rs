//! Batch front end: TOML run configurations, task orchestration and
//! JSON/CSV report emission.

pub mod config;
pub mod report;
pub mod tasks;

pub use config::{ConfigError, Overrides, RunConfig, Task};
pub use report::{Check, Provenance, ReasonCode, ReportBundle};
pub use tasks::{run, run_scatter, run_spectrum, run_verify};
