pub mod convergence;
pub mod grid_flow;
pub mod identity_sweep;
pub mod nu_study;
pub mod space_form;

use crate::config::{ExperimentConfig, Mode};
use crate::error::HarnessError;
use crate::outcome::Outcome;
use crate::pipeline::Lab;

/// Runs the experiment a config describes.
pub fn run_experiment(lab: &Lab, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    match cfg.run.mode {
        Mode::GridFlow => grid_flow::run(lab, cfg),
        Mode::SpaceForm => space_form::run(cfg),
        Mode::IdentitySweep => identity_sweep::run(lab, cfg),
        Mode::NuStudy => nu_study::run(lab, cfg),
        Mode::ConvergenceStudy => convergence::run(lab, cfg),
    }
}
