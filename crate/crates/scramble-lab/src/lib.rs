//! Configuration, seeded parallel runner and CSV/JSON persistence for `scramble` experiments.

pub mod config;
pub mod error;
pub mod experiments;
pub mod persist;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, Resolved};
pub use error::{LabError, LabResult};
pub use runner::{run_experiment, sweep, RunOptions, RunReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SCRAMBLE_OUT_DIR";
/// Output directory used when neither a flag, the config nor the environment names one.
pub const DEFAULT_OUT_DIR: &str = "scramble-out";
