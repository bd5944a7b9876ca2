use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::nn::{Dataset, ModelSpec};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AnalysisError::RaggedRows);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `M^T (M v)`.
    fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let p = dot(row, v);
            for (o, r) in out.iter_mut().zip(row) {
                *o += p * r;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Penultimate-stage activations for the examples of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub matrix: Matrix,
    /// Dataset position of each row.
    pub example_indices: Vec<usize>,
}

/// Rows are `forward_to_stage(x, n - 1)` flattened, for every example
/// labelled `class`.
pub fn deep_representation(model: &ModelSpec, data: &Dataset, class: usize) -> Result<Representation, AnalysisError> {
    let n = model.stage_count();
    if n < 2 {
        return Err(AnalysisError::NoPenultimateStage);
    }
    data.check_against(model)?;
    let mut rows = Vec::new();
    let mut example_indices = Vec::new();
    for (i, (x, &label)) in data.inputs().iter().zip(data.labels()).enumerate() {
        if label == class {
            rows.push(model.forward_to_stage(x, n - 1)?.into_data());
            example_indices.push(i);
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::EmptyClass(class));
    }
    Ok(Representation {
        matrix: Matrix::from_rows(rows)?,
        example_indices,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    /// Standard deviations above the mean score that flag a row.
    pub k: f64,
    /// Use squared projections as scores.
    pub squared: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            k: 1.5,
            squared: false,
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `scores`.
    pub std: f64,
    pub threshold_k: f64,
    pub threshold: f64,
    pub flagged: Vec<usize>,
    /// Top right singular vector of the centered matrix.
    pub singular_vector: Vec<f64>,
    pub iterations: usize,
    /// `|G v - (v.G v) v| / |G v|` for `G = M^T M`; zero for a zero matrix.
    pub rayleigh_residual: f64,
}

/// Scores each row by the magnitude of its centered projection onto the top
/// right singular vector and flags rows scoring above `mean + k * std`.
///
/// The singular vector comes from power iteration on `M^T M`, started from
/// the centered row of largest norm.
pub fn spectral_signature(rows: &Matrix, opts: &SpectralOptions) -> Result<SpectralReport, AnalysisError> {
    if rows.rows() < 2 {
        return Err(AnalysisError::TooFewRows(rows.rows()));
    }
    let (n, d) = (rows.rows(), rows.cols());
    let mut mean_row = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean_row.iter_mut().zip(rows.row(i)) {
            *m += v;
        }
    }
    mean_row.iter_mut().for_each(|m| *m /= n as f64);
    let centered = Matrix {
        rows: n,
        cols: d,
        data: (0..n)
            .flat_map(|i| rows.row(i).iter().zip(&mean_row).map(|(v, m)| v - m))
            .collect(),
    };

    let start = (0..n)
        .map(|i| centered.row(i))
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))
        .map(<[f64]>::to_vec)
        .unwrap_or_default();
    let start_norm = norm(&start);
    let (v, iterations, residual) = if start_norm == 0.0 {
        let mut e1 = vec![0.0; d];
        if d > 0 {
            e1[0] = 1.0;
        }
        (e1, 0, 0.0)
    } else {
        power_iteration(&centered, start.iter().map(|s| s / start_norm).collect(), opts)?
    };

    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let p = dot(centered.row(i), &v).abs();
            if opts.squared {
                p * p
            } else {
                p
            }
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let threshold = if opts.k.is_infinite() {
        opts.k
    } else {
        mean + opts.k * std
    };
    let flagged = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(SpectralReport {
        scores,
        mean,
        std,
        threshold_k: opts.k,
        threshold,
        flagged,
        singular_vector: v,
        iterations,
        rayleigh_residual: residual,
    })
}

fn rayleigh_residual(m: &Matrix, v: &[f64]) -> f64 {
    let gv = m.gram_apply(v);
    let lambda = dot(v, &gv);
    let r: Vec<f64> = gv.iter().zip(v).map(|(g, x)| g - lambda * x).collect();
    let scale = norm(&gv);
    if scale == 0.0 {
        0.0
    } else {
        norm(&r) / scale
    }
}

fn power_iteration(m: &Matrix, mut v: Vec<f64>, opts: &SpectralOptions) -> Result<(Vec<f64>, usize, f64), AnalysisError> {
    for it in 1..=opts.max_iterations {
        let w = m.gram_apply(&v);
        let len = norm(&w);
        if len == 0.0 {
            // v is in the null space of a nonzero matrix; only possible
            // for a degenerate start, which the largest-row start avoids.
            return Err(AnalysisError::NonConvergence {
                iterations: it,
                residual: f64::INFINITY,
            });
        }
        let next: Vec<f64> = w.iter().map(|x| x / len).collect();
        let change = norm(&next.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        v = next;
        if change < opts.tolerance {
            let residual = rayleigh_residual(m, &v);
            return Ok((v, it, residual));
        }
    }
    Err(AnalysisError::NonConvergence {
        iterations: opts.max_iterations,
        residual: rayleigh_residual(m, &v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_score_zero() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0]; 4]).unwrap();
        let report = spectral_signature(&m, &SpectralOptions::default()).unwrap();
        assert!(report.scores.iter().all(|&s| s == 0.0));
        assert!(report.flagged.is_empty());
    }

    #[test]
    fn infinite_k_flags_nothing() {
        let m = Matrix::from_rows(vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![9.0, 1.0]]).unwrap();
        let opts = SpectralOptions {
            k: f64::INFINITY,
            ..SpectralOptions::default()
        };
        assert!(spectral_signature(&m, &opts).unwrap().flagged.is_empty());
    }

    #[test]
    fn needs_two_rows() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            spectral_signature(&m, &SpectralOptions::default()),
            Err(AnalysisError::TooFewRows(1))
        ));
    }

    #[test]
    fn flag_rule_matches_scores() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos(), if i == 7 { 6.0 } else { 0.0 }])
            .collect();
        let report = spectral_signature(&Matrix::from_rows(rows).unwrap(), &SpectralOptions::default()).unwrap();
        let expected: Vec<usize> = (0..20)
            .filter(|&i| report.scores[i] > report.mean + 1.5 * report.std)
            .collect();
        assert_eq!(report.flagged, expected);
        assert!(report.flagged.contains(&7));
    }

    #[test]
    fn squared_scores_option() {
        let rows = vec![vec![0.0, 1.0], vec![0.0, -1.0], vec![0.0, 3.0], vec![0.0, -3.0]];
        let m = Matrix::from_rows(rows).unwrap();
        let plain = spectral_signature(&m, &SpectralOptions::default()).unwrap();
        let sq = spectral_signature(
            &m,
            &SpectralOptions {
                squared: true,
                ..SpectralOptions::default()
            },
        )
        .unwrap();
        for (a, b) in plain.scores.iter().zip(&sq.scores) {
            assert!((a * a - b).abs() < 1e-12);
        }
    }
}
