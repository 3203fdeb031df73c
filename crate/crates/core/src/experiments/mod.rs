//! Simulation designs, Monte Carlo runners and CSV output.

mod config;
mod dgp;
mod metrics;
mod runners;
pub mod summary;

pub use config::{Design, Dgp, ExperimentConfig, Task, ThresholdChoice};
pub use dgp::{beta_star, generate, keyed_rng, resolve_ld_grid};
pub use metrics::{emit_csv, read_csv, write_csv, MetricsRow, HEADER};
pub use runners::{run, run_estimate_hd, run_estimate_ld, run_null_test, run_power_test, run_refit};
