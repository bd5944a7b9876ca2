//! What-if input edits and spectral-signature outlier scoring.

mod edits;
mod spectral;

pub use edits::{nullify, substitute, transform, Edit, Transform};
pub use spectral::{
    deep_representation, spectral_signature, Matrix, Representation, SpectralOptions,
    SpectralReport,
};

use thiserror::Error;

use crate::attribution::AttributionError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error("shape {0:?} is not spatial (need HxW or CxHxW)")]
    NotSpatial(Vec<usize>),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("substitution needs a source input")]
    MissingSource,
    #[error("spectral signature needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("class {0} has no examples")]
    EmptyClass(usize),
    #[error("model has a single stage, so no penultimate representation")]
    NoPenultimateStage,
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}
