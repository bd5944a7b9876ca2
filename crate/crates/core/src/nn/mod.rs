//! Minimal feed-forward network runtime: forward evaluation, input
//! gradients, stage truncation and linear-head retraining.

pub mod fixtures;
mod model;
mod tensor;
mod train;

pub use model::{LayerSpec, ModelSpec};
pub use tensor::Tensor;
pub use train::{accuracy, train_linear_head, truncate, Dataset, HeadHyper};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("stage {stage} out of range 1..={stages}")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("truncating at the last stage ({stage}) is the identity; use the original model")]
    TruncateAtLastStage { stage: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
}
