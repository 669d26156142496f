//! Experiment harness for growing ReLU networks: configuration, dataset
//! files, the staged growth loop, reports and the network file format.

pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod netfile;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{run_growth_experiment, run_inactivity_study, RunReport};
