//! Spec-driven experiment runner for the `chl` command.

pub mod checkpoint;
pub mod error;
pub mod runner;
pub mod spec;

pub use checkpoint::Checkpoint;
pub use error::{CliError, CliResult};
pub use runner::{eval_checkpoint, pseudospectra, run, sweep, RunOptions, RunRecord, SweepRecord};
pub use spec::ExperimentSpec;
