//! Experiment runner for the conformal Ricci flow lab.
//!
//! A TOML config selects a mode; the mode runs its computation through a
//! [`Lab`], judges the result against tolerances and returns an
//! [`Outcome`] that [`output::write_outcome`] turns into `run.csv`,
//! `report.json` and any extra tables.

pub mod config;
pub mod error;
pub mod modes;
mod oracle;
pub mod orders;
pub mod outcome;
pub mod output;
pub mod pipeline;

pub use config::{ConfigError, ExperimentConfig, Mode};
pub use error::HarnessError;
pub use modes::run_experiment;
pub use outcome::{Invariant, Outcome};
pub use pipeline::Lab;
