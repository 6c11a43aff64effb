//! Experiment runner: JSON configs in, CSV and JSON results out.

pub mod config;
pub mod experiment;

pub use config::{Algorithm, ConfigError, ExperimentConfig, GraphSpec};
pub use experiment::{compare_rounds, run_experiment, write_outputs, ComparisonRow, Experiment, ResultRecord};
