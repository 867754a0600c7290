use std::path::PathBuf;

use crf_core::checkpoint::CheckpointError;
use crf_core::conjugate::ConjugateError;
use crf_core::functionals::FunctionalError;
use crf_core::grid::GridError;
use crf_core::identities::IdentityError;
use crf_core::nu::NuError;
use crf_core::pressure::PressureError;
use crf_core::space_form::SpaceFormError;
use crf_core::tensor::GeometryError;
use crf_core::yamabe::NormalizeError;
use thiserror::Error;

use crate::config::ConfigError;

/// Anything that stops an experiment from producing its measurements.
/// Invariant failures are not errors; they are recorded in the outcome.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("normalization: {0}")]
    Normalize(#[from] NormalizeError),
    #[error("flow: {0}")]
    Flow(String),
    #[error("conjugate heat: {0}")]
    Conjugate(#[from] ConjugateError),
    #[error("functionals: {0}")]
    Functional(#[from] FunctionalError),
    #[error("identities: {0}")]
    Identity(#[from] IdentityError),
    #[error("nu: {0}")]
    Nu(#[from] NuError),
    #[error("space form: {0}")]
    SpaceForm(#[from] SpaceFormError),
    #[error("pressure: {0}")]
    Pressure(#[from] PressureError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Study(String),
}
