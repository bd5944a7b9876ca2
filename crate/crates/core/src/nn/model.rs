use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// One layer of a feed-forward network.
///
/// `conv2d` uses valid padding and stride 1; `maxpool2` is a 2x2 window with
/// stride 2 (odd trailing rows/columns are dropped).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    /// `w` is `out x in`.
    Dense { w: Vec<Vec<f64>>, b: Vec<f64> },
    Relu,
    Flatten,
    /// `w` is `out_ch x in_ch x kh x kw`.
    Conv2d {
        w: Vec<Vec<Vec<Vec<f64>>>>,
        b: Vec<f64>,
    },
    Maxpool2,
}

impl LayerSpec {
    pub fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::Maxpool2)
    }

    /// Output shape for `input`, or a description of why the layer cannot
    /// consume it.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerSpec::Dense { w, b } => {
                let [d] = input else {
                    return Err(format!("dense expects a 1-D input, got {input:?}"));
                };
                if w.is_empty() {
                    return Err("dense weight matrix has no rows".into());
                }
                if let Some(row) = w.iter().position(|r| r.len() != *d) {
                    return Err(format!(
                        "dense weight row {row} has {} columns, input has {d}",
                        w[row].len()
                    ));
                }
                if b.len() != w.len() {
                    return Err(format!(
                        "dense bias has {} entries, weight has {} rows",
                        b.len(),
                        w.len()
                    ));
                }
                Ok(vec![w.len()])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Conv2d { w, b } => {
                let [c, h, wd] = input else {
                    return Err(format!("conv2d expects a CxHxW input, got {input:?}"));
                };
                if w.is_empty() || w[0].is_empty() || w[0][0].is_empty() || w[0][0][0].is_empty()
                {
                    return Err("conv2d kernel has an empty dimension".into());
                }
                let (kh, kw) = (w[0][0].len(), w[0][0][0].len());
                let consistent = w.iter().all(|oc| {
                    oc.len() == *c
                        && oc
                            .iter()
                            .all(|ic| ic.len() == kh && ic.iter().all(|row| row.len() == kw))
                });
                if !consistent {
                    return Err(format!(
                        "conv2d kernel must be out x {c} x {kh} x {kw} throughout"
                    ));
                }
                if b.len() != w.len() {
                    return Err("conv2d bias length differs from output channels".into());
                }
                if kh > *h || kw > *wd {
                    return Err(format!("conv2d kernel {kh}x{kw} larger than input {h}x{wd}"));
                }
                Ok(vec![w.len(), h - kh + 1, wd - kw + 1])
            }
            LayerSpec::Maxpool2 => {
                let [c, h, wd] = input else {
                    return Err(format!("maxpool2 expects a CxHxW input, got {input:?}"));
                };
                if *h < 2 || *wd < 2 {
                    return Err(format!("maxpool2 needs at least 2x2, got {h}x{wd}"));
                }
                Ok(vec![*c, h / 2, wd / 2])
            }
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            LayerSpec::Dense { w, b } => {
                w.iter().flatten().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())
            }
            LayerSpec::Conv2d { w, b } => {
                w.iter().flatten().flatten().flatten().all(|v| v.is_finite())
                    && b.iter().all(|v| v.is_finite())
            }
            _ => true,
        }
    }

    /// Applies the layer to `input` laid out with shape `in_shape`.
    fn forward_raw(&self, input: &[f64], in_shape: &[usize]) -> Vec<f64> {
        match self {
            LayerSpec::Dense { w, b } => w
                .iter()
                .zip(b)
                .map(|(row, bias)| {
                    let mut acc = *bias;
                    for (wi, xi) in row.iter().zip(input) {
                        acc += wi * xi;
                    }
                    acc
                })
                .collect(),
            LayerSpec::Relu => input
                .iter()
                .map(|&v| if v > 0.0 { v } else { 0.0 })
                .collect(),
            LayerSpec::Flatten => input.to_vec(),
            LayerSpec::Conv2d { w, b } => {
                let (h, wd) = (in_shape[1], in_shape[2]);
                let (kh, kw) = (w[0][0].len(), w[0][0][0].len());
                let (oh, ow) = (h - kh + 1, wd - kw + 1);
                let mut out = Vec::with_capacity(w.len() * oh * ow);
                for (kernel, bias) in w.iter().zip(b) {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = *bias;
                            for (ic, plane) in kernel.iter().enumerate() {
                                for (dr, krow) in plane.iter().enumerate() {
                                    let base = (ic * h + r + dr) * wd + c;
                                    for (dc, kv) in krow.iter().enumerate() {
                                        acc += kv * input[base + dc];
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
                out
            }
            LayerSpec::Maxpool2 => {
                let (ch, h, wd) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / 2, wd / 2);
                let mut out = Vec::with_capacity(ch * oh * ow);
                for c in 0..ch {
                    for r in 0..oh {
                        for col in 0..ow {
                            let (_, v) = pool_argmax(input, c, h, wd, r, col);
                            out.push(v);
                        }
                    }
                }
                out
            }
        }
    }

    /// Pulls `grad_out` back through the layer given its forward input.
    fn backward_raw(&self, input: &[f64], in_shape: &[usize], grad_out: &[f64]) -> Vec<f64> {
        match self {
            LayerSpec::Dense { w, .. } => {
                let mut grad = vec![0.0; input.len()];
                for (row, g) in w.iter().zip(grad_out) {
                    for (gi, wi) in grad.iter_mut().zip(row) {
                        *gi += wi * g;
                    }
                }
                grad
            }
            LayerSpec::Relu => input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
            LayerSpec::Flatten => grad_out.to_vec(),
            LayerSpec::Conv2d { w, .. } => {
                let (h, wd) = (in_shape[1], in_shape[2]);
                let (kh, kw) = (w[0][0].len(), w[0][0][0].len());
                let (oh, ow) = (h - kh + 1, wd - kw + 1);
                let mut grad = vec![0.0; input.len()];
                for (oc, kernel) in w.iter().enumerate() {
                    for r in 0..oh {
                        for c in 0..ow {
                            let g = grad_out[(oc * oh + r) * ow + c];
                            for (ic, plane) in kernel.iter().enumerate() {
                                for (dr, krow) in plane.iter().enumerate() {
                                    let base = (ic * h + r + dr) * wd + c;
                                    for (dc, kv) in krow.iter().enumerate() {
                                        grad[base + dc] += kv * g;
                                    }
                                }
                            }
                        }
                    }
                }
                grad
            }
            LayerSpec::Maxpool2 => {
                let (ch, h, wd) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / 2, wd / 2);
                let mut grad = vec![0.0; input.len()];
                for c in 0..ch {
                    for r in 0..oh {
                        for col in 0..ow {
                            let (idx, _) = pool_argmax(input, c, h, wd, r, col);
                            grad[idx] += grad_out[(c * oh + r) * ow + col];
                        }
                    }
                }
                grad
            }
        }
    }
}

/// Flat index and value of the maximum in one 2x2 pooling window (first wins
/// on ties).
fn pool_argmax(input: &[f64], c: usize, h: usize, w: usize, r: usize, col: usize) -> (usize, f64) {
    let mut best = ((c * h + 2 * r) * w + 2 * col, f64::NEG_INFINITY);
    for dr in 0..2 {
        for dc in 0..2 {
            let idx = (c * h + 2 * r + dr) * w + 2 * col + dc;
            if input[idx] > best.1 {
                best = (idx, input[idx]);
            }
        }
    }
    best
}

#[derive(Deserialize)]
struct RawModel {
    name: String,
    input_shape: Vec<usize>,
    class_labels: Vec<String>,
    layers: Vec<LayerSpec>,
    stage_boundaries: Vec<usize>,
}

/// A validated feed-forward classifier.
///
/// The network is split into stages: stage `l` ends after layer
/// `stage_boundaries[l - 1]`. By convention a stage ends after every
/// activation layer (relu or maxpool2), and the last stage is the final dense
/// (logit) layer. The activation at stage `l < n` is the output of its
/// boundary layer; the activation at stage `n` is the input to the final dense
/// layer, so that the penultimate representation is stage `n - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct ModelSpec {
    name: String,
    input_shape: Vec<usize>,
    class_labels: Vec<String>,
    layers: Vec<LayerSpec>,
    stage_boundaries: Vec<usize>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the
    /// logit shape.
    #[serde(skip)]
    shapes: Vec<Vec<usize>>,
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = NnError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        ModelSpec::new(
            raw.name,
            raw.input_shape,
            raw.class_labels,
            raw.layers,
            raw.stage_boundaries,
        )
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        class_labels: Vec<String>,
        layers: Vec<LayerSpec>,
        stage_boundaries: Vec<usize>,
    ) -> Result<Self, NnError> {
        let invalid = |msg: String| Err(NnError::InvalidModel(msg));
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::InvalidShape(input_shape));
        }
        if class_labels.is_empty() {
            return invalid("model needs at least one class label".into());
        }
        let Some(LayerSpec::Dense { w, .. }) = layers.last() else {
            return invalid("final layer must be dense".into());
        };
        if w.len() != class_labels.len() {
            return invalid(format!(
                "final dense layer has {} outputs but there are {} class labels",
                w.len(),
                class_labels.len()
            ));
        }
        if stage_boundaries.is_empty()
            || stage_boundaries.windows(2).any(|p| p[0] >= p[1])
            || *stage_boundaries.last().unwrap() != layers.len() - 1
        {
            return invalid(format!(
                "stage boundaries {stage_boundaries:?} must be strictly increasing and end at layer {}",
                layers.len() - 1
            ));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape.clone());
        for (i, layer) in layers.iter().enumerate() {
            if !layer.all_finite() {
                return invalid(format!("layer {i} has non-finite parameters"));
            }
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| NnError::InvalidModel(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        Ok(Self {
            name: name.into(),
            input_shape,
            class_labels,
            layers,
            stage_boundaries,
            shapes,
        })
    }

    /// Stage boundaries under the activation convention: one after each relu
    /// or maxpool2, plus the final layer.
    pub fn activation_boundaries(layers: &[LayerSpec]) -> Vec<usize> {
        let last = layers.len().saturating_sub(1);
        let mut out: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(i, l)| l.is_activation() && *i != last)
            .map(|(i, _)| i)
            .collect();
        out.push(last);
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn stage_boundaries(&self) -> &[usize] {
        &self.stage_boundaries
    }

    /// Number of stages `n`.
    pub fn stage_count(&self) -> usize {
        self.stage_boundaries.len()
    }

    pub fn head(&self) -> &LayerSpec {
        self.layers.last().expect("validated model has layers")
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        x.ensure_shape(&self.input_shape)
    }

    fn check_class(&self, class: usize) -> Result<(), NnError> {
        if class >= self.num_classes() {
            return Err(NnError::ClassOutOfRange {
                class,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Layer count run by `forward_to_stage(stage)`.
    pub(crate) fn stage_end(&self, stage: usize) -> Result<usize, NnError> {
        let n = self.stage_count();
        if stage == 0 || stage > n {
            return Err(NnError::StageOutOfRange { stage, stages: n });
        }
        Ok(if stage == n {
            self.layers.len() - 1
        } else {
            self.stage_boundaries[stage - 1] + 1
        })
    }

    fn run_prefix(&self, x: &[f64], end: usize) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (layer, shape) in self.layers[..end].iter().zip(&self.shapes) {
            cur = layer.forward_raw(&cur, shape);
        }
        cur
    }

    /// Logits of the model on `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x.data()))
    }

    /// Logits for a flat input already known to have the model's input size.
    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Tensor {
        let out = self.run_prefix(x, self.layers.len());
        Tensor::from_parts_unchecked(self.shapes.last().unwrap().clone(), out)
    }

    /// Single logit for a flat input; the hot path of the Shapley kernels.
    pub(crate) fn logit_unchecked(&self, x: &[f64], class: usize) -> f64 {
        self.run_prefix(x, self.layers.len())[class]
    }

    /// Activation at stage boundary `stage` (1-based).
    pub fn forward_to_stage(&self, x: &Tensor, stage: usize) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let end = self.stage_end(stage)?;
        let out = self.run_prefix(x.data(), end);
        Ok(Tensor::from_parts_unchecked(self.shapes[end].clone(), out))
    }

    /// Applies the final dense layer to a stage-`n` activation.
    pub fn apply_head(&self, activation: &Tensor) -> Result<Tensor, NnError> {
        let last = self.layers.len() - 1;
        activation.ensure_shape(&self.shapes[last])?;
        let out = self.head().forward_raw(activation.data(), &self.shapes[last]);
        Ok(Tensor::from_parts_unchecked(
            self.shapes[last + 1].clone(),
            out,
        ))
    }

    /// Gradient of logit `class` with respect to the input, by reverse-mode
    /// accumulation.
    pub fn gradient(&self, x: &Tensor, class: usize) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        self.check_class(class)?;
        Ok(Tensor::from_parts_unchecked(
            self.input_shape.clone(),
            self.gradient_unchecked(x.data(), class),
        ))
    }

    pub(crate) fn gradient_unchecked(&self, x: &[f64], class: usize) -> Vec<f64> {
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            let next = layer.forward_raw(&cur, shape);
            inputs.push(std::mem::replace(&mut cur, next));
        }
        let mut grad = vec![0.0; cur.len()];
        grad[class] = 1.0;
        for ((layer, shape), input) in self.layers.iter().zip(&self.shapes).zip(&inputs).rev() {
            grad = layer.backward_raw(input, shape, &grad);
        }
        grad
    }

    /// Copy of the model keeping stages `1..=stage` and replacing everything
    /// after them with `flatten` and `head`.
    pub(crate) fn with_head(&self, stage: usize, head: LayerSpec) -> Result<ModelSpec, NnError> {
        let keep = self.stage_end(stage)?;
        let mut layers = self.layers[..keep].to_vec();
        layers.push(LayerSpec::Flatten);
        layers.push(head);
        let mut boundaries = self.stage_boundaries[..stage].to_vec();
        boundaries.push(layers.len() - 1);
        ModelSpec::new(
            format!("{}@stage{stage}", self.name),
            self.input_shape.clone(),
            self.class_labels.clone(),
            layers,
            boundaries,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model(d: usize) -> ModelSpec {
        let w = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ModelSpec::new(
            "id",
            vec![d],
            (0..d).map(|i| format!("c{i}")).collect(),
            vec![LayerSpec::Dense { w, b: vec![0.0; d] }],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let m = identity_model(3);
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data(), &[1.0, -2.0, 3.0]);
        assert_eq!(m.forward_to_stage(&x, 1).unwrap(), x);
    }

    #[test]
    fn relu_zeroes_negatives() {
        let out = LayerSpec::Relu.forward_raw(&[-1.0, 0.0, 2.0], &[3]);
        assert_eq!(out, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn flatten_relu_first_stage_kills_negative_input() {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Relu,
            LayerSpec::Dense {
                w: vec![vec![1.0; 4], vec![-1.0; 4]],
                b: vec![0.0, 0.0],
            },
        ];
        let m = ModelSpec::new(
            "fr",
            vec![2, 2],
            vec!["a".into(), "b".into()],
            layers.clone(),
            ModelSpec::activation_boundaries(&layers),
        )
        .unwrap();
        assert_eq!(m.stage_boundaries(), &[1, 2]);
        let x = Tensor::new(vec![2, 2], vec![-1.0, -0.5, -3.0, -2.0]).unwrap();
        assert_eq!(m.forward_to_stage(&x, 1).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let m = identity_model(3);
        let err = m.forward(&Tensor::from_vec(vec![1.0, 2.0]).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn stage_and_class_ranges_are_checked() {
        let m = identity_model(2);
        let x = Tensor::from_vec(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            m.forward_to_stage(&x, 0),
            Err(NnError::StageOutOfRange { .. })
        ));
        assert!(matches!(
            m.forward_to_stage(&x, 2),
            Err(NnError::StageOutOfRange { .. })
        ));
        assert!(matches!(
            m.gradient(&x, 2),
            Err(NnError::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_models_are_rejected() {
        let dense = LayerSpec::Dense {
            w: vec![vec![1.0, 2.0]],
            b: vec![0.0],
        };
        // wrong class count
        assert!(ModelSpec::new("m", vec![2], vec!["a".into(), "b".into()], vec![dense.clone()], vec![0]).is_err());
        // boundaries not ending at the final layer
        assert!(ModelSpec::new(
            "m",
            vec![2],
            vec!["a".into()],
            vec![LayerSpec::Relu, dense.clone()],
            vec![0]
        )
        .is_err());
        // dense on a 2-D input
        assert!(ModelSpec::new("m", vec![1, 2], vec!["a".into()], vec![dense], vec![0]).is_err());
    }

    #[test]
    fn conv_and_pool_shapes_chain() {
        let kernel = vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]; 2];
        let layers = vec![
            LayerSpec::Conv2d {
                w: kernel,
                b: vec![0.0, 0.5],
            },
            LayerSpec::Relu,
            LayerSpec::Maxpool2,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                w: vec![vec![1.0; 8]; 3],
                b: vec![0.0; 3],
            },
        ];
        let m = ModelSpec::new(
            "cnn",
            vec![1, 5, 5],
            vec!["a".into(), "b".into(), "c".into()],
            layers.clone(),
            ModelSpec::activation_boundaries(&layers),
        )
        .unwrap();
        assert_eq!(m.stage_boundaries(), &[1, 2, 4]);
        let x = Tensor::new(vec![1, 5, 5], (0..25).map(f64::from).collect()).unwrap();
        assert_eq!(m.forward_to_stage(&x, 2).unwrap().shape(), &[2, 2, 2]);
        // top-left pooled value for channel 0: max over conv outputs x[r][c] + x[r+1][c+1]
        let pooled = m.forward_to_stage(&x, 2).unwrap();
        assert_eq!(pooled.data()[0], 6.0 + 12.0);
    }

    #[test]
    fn json_round_trip_revalidates() {
        let m = identity_model(2);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""kind":"dense""#));
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
