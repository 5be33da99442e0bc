//! Configuration, orchestration and reporting around the numerical modules.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Mode, PsdSpec};
pub use report::{read_report, render, write_report, Format};
pub use run::{run_experiment, Payload, ReportRecord};
