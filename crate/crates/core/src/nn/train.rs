use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LayerSpec, ModelSpec, NnError, Tensor};

/// Labelled inputs sharing one shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

#[derive(Deserialize)]
struct RawDataset {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = NnError;

    fn try_from(raw: RawDataset) -> Result<Self, Self::Error> {
        Dataset::new(raw.inputs, raw.labels)
    }
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self, NnError> {
        if inputs.len() != labels.len() {
            return Err(NnError::LengthMismatch {
                features: inputs.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = inputs.first() {
            for x in &inputs[1..] {
                x.ensure_shape(first.shape())?;
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Checks shape and label range against `model`.
    pub fn check_against(&self, model: &ModelSpec) -> Result<(), NnError> {
        if let Some(first) = self.inputs.first() {
            first.ensure_shape(model.input_shape())?;
        }
        if let Some(&class) = self.labels.iter().find(|&&c| c >= model.num_classes()) {
            return Err(NnError::ClassOutOfRange {
                class,
                classes: model.num_classes(),
            });
        }
        Ok(())
    }
}

/// Hyperparameters for retraining a linear head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for HeadHyper {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Trains a dense `num_classes x dim` layer on flattened `features` by
/// full-batch gradient descent on softmax cross-entropy.
///
/// Weights start uniform in `[-0.05, 0.05]` drawn row-major from
/// `hyper.seed`; biases start at zero.
pub fn train_linear_head(
    features: &[Tensor],
    labels: &[usize],
    num_classes: usize,
    hyper: &HeadHyper,
) -> Result<LayerSpec, NnError> {
    if features.len() != labels.len() {
        return Err(NnError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let Some(first) = features.first() else {
        return Err(NnError::EmptyDataset);
    };
    let dim = first.len();
    for f in features {
        f.ensure_shape(first.shape())?;
    }
    if let Some(&class) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(NnError::ClassOutOfRange {
            class,
            classes: num_classes,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut w: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-0.05..=0.05)).collect())
        .collect();
    let mut b = vec![0.0; num_classes];

    let scale = 1.0 / features.len() as f64;
    let mut grad_w = vec![vec![0.0; dim]; num_classes];
    let mut grad_b = vec![0.0; num_classes];
    let mut probs = vec![0.0; num_classes];
    for _ in 0..hyper.epochs {
        grad_w.iter_mut().for_each(|row| row.fill(0.0));
        grad_b.fill(0.0);
        for (x, &y) in features.iter().zip(labels) {
            let x = x.data();
            for (p, (row, bias)) in probs.iter_mut().zip(w.iter().zip(&b)) {
                *p = bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            probs[y] -= 1.0;
            for (k, &delta) in probs.iter().enumerate() {
                grad_b[k] += delta;
                for (g, v) in grad_w[k].iter_mut().zip(x) {
                    *g += delta * v;
                }
            }
        }
        for k in 0..num_classes {
            b[k] -= hyper.learning_rate * scale * grad_b[k];
            for (wv, g) in w[k].iter_mut().zip(&grad_w[k]) {
                *wv -= hyper.learning_rate * scale * g;
            }
        }
    }
    Ok(LayerSpec::Dense { w, b })
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Builds the truncated model `f_l`: stages `1..=stage` of `model`, a flatten,
/// and a dense head retrained on the stage-`stage` activations of `data`.
///
/// `stage == n` is rejected because truncation there is the identity; use the
/// original model instead.
pub fn truncate(
    model: &ModelSpec,
    stage: usize,
    data: &Dataset,
    hyper: &HeadHyper,
) -> Result<ModelSpec, NnError> {
    let n = model.stage_count();
    if stage == n && n > 0 {
        return Err(NnError::TruncateAtLastStage { stage });
    }
    if stage == 0 || stage > n {
        return Err(NnError::StageOutOfRange { stage, stages: n });
    }
    data.check_against(model)?;
    let features = data
        .inputs()
        .iter()
        .map(|x| model.forward_to_stage(x, stage))
        .collect::<Result<Vec<_>, _>>()?;
    let head = train_linear_head(&features, data.labels(), model.num_classes(), hyper)?;
    model.with_head(stage, head)
}

/// Fraction of `data` whose argmax prediction matches the label.
pub fn accuracy(model: &ModelSpec, data: &Dataset) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut hits = 0usize;
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        if model.forward(x)?.argmax() == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
