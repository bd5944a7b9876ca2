use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::attribution::{grid_dims, masked_input, Window, WindowSpec};
use crate::nn::Tensor;

/// Geometric or intensity change applied to a whole input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Transform {
    Scale { factor: f64 },
    /// `k` clockwise quarter turns of every channel's grid.
    Rotate90 { k: u8 },
    /// Translate by `(dr, dc)`; vacated cells become 0.
    Shift { dr: i64, dc: i64 },
}

/// A what-if modification of an input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Edit {
    Nullify { window: WindowSpec },
    /// `source` names the input supplying the replacement values.
    Substitute { window: WindowSpec, source: String },
    Transform { transform: Transform },
}

impl Edit {
    /// Applies the edit. `source` must be given for substitutions.
    pub fn apply(&self, x: &Tensor, xbar: &Tensor, source: Option<&Tensor>) -> Result<Tensor, AnalysisError> {
        match self {
            Edit::Nullify { window } => nullify(x, &window.resolve(x.shape())?, xbar),
            Edit::Substitute { window, .. } => {
                let src = source.ok_or(AnalysisError::MissingSource)?;
                substitute(x, &window.resolve(x.shape())?, src)
            }
            Edit::Transform { transform: spec } => transform(x, spec),
        }
    }
}

/// Replaces the features inside `window` with the baseline.
pub fn nullify(x: &Tensor, window: &Window, xbar: &Tensor) -> Result<Tensor, AnalysisError> {
    window.check_len(x.len())?;
    let keep = window.complement(x.len());
    Ok(masked_input(x, xbar, keep.indices())?)
}

/// Copies `src`'s features inside `window` into `x`.
pub fn substitute(x: &Tensor, window: &Window, src: &Tensor) -> Result<Tensor, AnalysisError> {
    src.ensure_shape(x.shape())?;
    Ok(masked_input(src, x, window.indices())?)
}

pub fn transform(x: &Tensor, spec: &Transform) -> Result<Tensor, AnalysisError> {
    match *spec {
        Transform::Scale { factor } => {
            let data = x.data().iter().map(|v| v * factor).collect();
            Ok(Tensor::new(x.shape().to_vec(), data)?)
        }
        Transform::Rotate90 { k } => rotate90(x, k),
        Transform::Shift { dr, dc } => shift(x, dr, dc),
    }
}

fn spatial_dims(x: &Tensor) -> Result<(usize, usize, usize), AnalysisError> {
    match x.shape() {
        [_] => Err(AnalysisError::NotSpatial(x.shape().to_vec())),
        shape => grid_dims(shape).ok_or_else(|| AnalysisError::NotSpatial(shape.to_vec())),
    }
}

fn rotate90(x: &Tensor, k: u8) -> Result<Tensor, AnalysisError> {
    if !(1..=3).contains(&k) {
        return Err(AnalysisError::InvalidTransform(format!(
            "rotate90 takes k in 1..=3, got {k}"
        )));
    }
    let (channels, rows, cols) = spatial_dims(x)?;
    if k % 2 == 1 && rows != cols {
        return Err(AnalysisError::InvalidTransform(format!(
            "odd quarter turns need a square grid, got {rows}x{cols}"
        )));
    }
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..channels {
        let plane = ch * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                let (sr, sc) = match k {
                    1 => (rows - 1 - c, r),
                    2 => (rows - 1 - r, cols - 1 - c),
                    _ => (c, cols - 1 - r),
                };
                out[plane + r * cols + c] = src[plane + sr * cols + sc];
            }
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out)?)
}

fn shift(x: &Tensor, dr: i64, dc: i64) -> Result<Tensor, AnalysisError> {
    let (channels, rows, cols) = spatial_dims(x)?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..channels {
        let plane = ch * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                let (sr, sc) = (r as i64 - dr, c as i64 - dc);
                if (0..rows as i64).contains(&sr) && (0..cols as i64).contains(&sc) {
                    out[plane + r * cols + c] = src[plane + sr as usize * cols + sc as usize];
                }
            }
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out)?)
}
