//! Experiment runner for horocycle ensembles: configuration files, a
//! thread-pool executor, CSV/JSON reports and verification suites.

pub mod config;
pub mod error;
pub mod pool;
pub mod runner;
pub mod parse;
pub mod verify;

pub use config::{ExperimentConfig, Preset};
pub use error::LabError;
pub use pool::Pool;
pub use runner::{run, RunReport};
