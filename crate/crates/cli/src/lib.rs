//! Config-driven experiments on the singular obstacle problem: solve,
//! fit exponents at the free boundary, sweep parameters and check densities.

pub mod commands;
pub mod config;

pub use commands::{cmd_check_energy, cmd_exponents, cmd_solve, cmd_sweep, Outcome};
pub use config::ExperimentConfig;
