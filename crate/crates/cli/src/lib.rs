//! Experiment driver for the `inctpv` toolkit: configuration files, run
//! directories, method comparison, timing, and training-set export.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod timing;

pub use compare::compare_runs;
pub use config::{ExperimentConfig, Method, Overrides, Task};
pub use error::{CliError, CliResult};
pub use experiment::{generate, run_experiment, RunReport};
pub use export::export_training;
pub use timing::time_methods;
