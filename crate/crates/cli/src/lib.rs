//! Command-line pipeline around `ekhom-core`: configuration, stage runner,
//! verification and reporting.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use pipeline::{compute, run_pipeline, PipelineError, RunOptions, Stage};
pub use report::write_report;
pub use verify::{verify, VerifyReport};
