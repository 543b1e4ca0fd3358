//! Config-driven experiments on top of `fkc-core`: runs, sweeps and plot data.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plots;
pub mod run;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::Experiment;
pub use run::{run_experiment, run_sweep, sweep_cells, RunReport};
