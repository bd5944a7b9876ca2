//! Attribution kernels for the five operators under Shapley (exact and
//! permutation-sampled), integrated gradients and SmoothGrad.
//!
//! All kernels attribute a single target-class logit. Features outside the
//! window are held at the baseline and receive exactly zero attribution.

mod gradients;
mod ops;
mod shapley;
mod window;

pub use gradients::{integrated_gradients, smoothgrad};
pub use ops::{
    antijoin, antijoin_cross_model, attribute_cross, antijoin_projected, attribute, cross_model_projected,
    identity_attr, join_maps, masked_input, project_attr, select_attr, target_class,
};
pub use shapley::{shapley_exact, shapley_exact_cross, shapley_sampled, shapley_sampled_cross};
pub use window::{grid_dims, Rect, Window, WindowSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

/// Largest window `shapley_exact` will enumerate (2^15 coalitions).
pub const MAX_EXACT_WINDOW: usize = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttributionError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("window of {size} features exceeds the exact-Shapley limit of {max}")]
    WindowTooLarge { size: usize, max: usize },
    #[error("feature index {index} out of range for {len} features")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("rectangle {rect:?} outside a {rows}x{cols} grid")]
    RectOutOfBounds { rect: Rect, rows: usize, cols: usize },
    #[error("shape {0:?} has no 2-D grid interpretation")]
    NotSpatial(Vec<usize>),
    #[error("epsilon {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("{op} requires a Shapley backend, got {backend}")]
    UnsupportedBackend { op: &'static str, backend: Backend },
    #[error("incompatible models: {0}")]
    ModelMismatch(String),
}

/// Per-feature importance scores for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl AttributionMap {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AttributionError> {
        crate::nn::Tensor::new(shape.clone(), values.clone())?;
        Ok(Self { shape, values })
    }

    pub(crate) fn from_parts(shape: &[usize], values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape, vec![0.0; shape.iter().product()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Output of an evaluated expression: one map, an anti-join pair
/// (left = first input, right = second input), or one map per input of an
/// anti-join chain over three or more inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum AttributionResult {
    Single(AttributionMap),
    Pair {
        left: AttributionMap,
        right: AttributionMap,
    },
    Group(Vec<AttributionMap>),
}

impl AttributionResult {
    pub fn maps(&self) -> Vec<&AttributionMap> {
        match self {
            AttributionResult::Single(m) => vec![m],
            AttributionResult::Pair { left, right } => vec![left, right],
            AttributionResult::Group(ms) => ms.iter().collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.maps()[0].shape()
    }

    pub fn as_single(&self) -> Option<&AttributionMap> {
        match self {
            AttributionResult::Single(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ShapleyExact,
    ShapleySampled,
    IntegratedGradients,
    Smoothgrad,
}

impl Backend {
    pub fn is_shapley(self) -> bool {
        matches!(self, Backend::ShapleyExact | Backend::ShapleySampled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::ShapleyExact => "shapley-exact",
            Backend::ShapleySampled => "shapley-sampled",
            Backend::IntegratedGradients => "integrated-gradients",
            Backend::Smoothgrad => "smoothgrad",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "shapley-exact" => Backend::ShapleyExact,
            "shapley-sampled" => Backend::ShapleySampled,
            "integrated-gradients" | "ig" => Backend::IntegratedGradients,
            "smoothgrad" => Backend::Smoothgrad,
            other => return Err(format!("unknown backend '{other}'")),
        })
    }
}

/// Which logit to attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    /// The class the unmodified model predicts for the input.
    Argmax,
    Class(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend: Backend,
    /// Permutations for `shapley-sampled`.
    pub samples: usize,
    /// Riemann steps for integrated gradients.
    pub steps: usize,
    pub noise_sigma: f64,
    pub noise_count: usize,
    pub seed: u64,
    /// Weight of the left operand in a join.
    pub epsilon: f64,
    pub target: TargetPolicy,
    /// Integrated-gradients anti-join against the shared baseline instead of
    /// the other input.
    pub ig_antijoin_shared_baseline: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            backend: Backend::ShapleySampled,
            samples: 2000,
            steps: 50,
            noise_sigma: 0.1,
            noise_count: 50,
            seed: 0,
            epsilon: 0.5,
            target: TargetPolicy::Argmax,
            ig_antijoin_shared_baseline: false,
        }
    }
}

impl BackendConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AttributionError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AttributionError::EpsilonOutOfRange(self.epsilon));
        }
        let bad = |what: &str| Err(AttributionError::InvalidConfig(what.to_string()));
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.noise_count == 0 {
            return bad("noise_count must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        Ok(())
    }
}

/// Running mean update; exact when every observation is equal.
#[inline]
pub(crate) fn mean_update(mean: &mut f64, value: f64, count: usize) {
    *mean += (value - *mean) / count as f64;
}
