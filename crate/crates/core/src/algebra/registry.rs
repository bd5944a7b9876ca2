use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use crate::nn::{self, Dataset, HeadHyper, ModelSpec, NnError, Tensor};

/// Models, inputs and truncated models addressable by reference.
///
/// Truncated models are cached per `(model, stage)`; concurrent readers are
/// allowed and inserts for one key are idempotent because truncation is
/// deterministic.
#[derive(Debug, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<ModelSpec>>,
    inputs: BTreeMap<String, Arc<Tensor>>,
    truncated: RwLock<HashMap<(String, usize), Arc<ModelSpec>>>,
    baseline: Option<Tensor>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_model(&mut self, reference: impl Into<String>, model: ModelSpec) -> &mut Self {
        self.models.insert(reference.into(), Arc::new(model));
        self
    }

    pub fn add_input(&mut self, reference: impl Into<String>, input: Tensor) -> &mut Self {
        self.inputs.insert(reference.into(), Arc::new(input));
        self
    }

    /// Overrides the all-zero baseline (e.g. with a dataset mean).
    pub fn set_baseline(&mut self, baseline: Tensor) -> &mut Self {
        self.baseline = Some(baseline);
        self
    }

    pub fn model(&self, reference: &str) -> Option<&Arc<ModelSpec>> {
        self.models.get(reference)
    }

    pub fn input(&self, reference: &str) -> Option<&Arc<Tensor>> {
        self.inputs.get(reference)
    }

    /// Baseline for inputs of `shape`.
    pub fn baseline(&self, shape: &[usize]) -> Tensor {
        match &self.baseline {
            Some(b) if b.shape() == shape => b.clone(),
            _ => Tensor::zeros(shape),
        }
    }

    /// Registers `truncated` as `model` cut at `stage`. It must keep the
    /// first `stage` stages of `model` and add one head stage.
    pub fn add_truncated(&self, model: &str, stage: usize, truncated: ModelSpec) -> Result<(), NnError> {
        let base = self
            .models
            .get(model)
            .ok_or_else(|| NnError::InvalidModel(format!("unknown model '{model}'")))?;
        if truncated.input_shape() != base.input_shape() || truncated.num_classes() != base.num_classes() {
            return Err(NnError::InvalidModel(format!(
                "truncated model does not match '{model}' in input shape or classes"
            )));
        }
        let n = base.stage_count();
        if stage == 0 || stage >= n {
            return Err(NnError::StageOutOfRange { stage, stages: n });
        }
        let keep = base.stage_end(stage)?;
        let layers = truncated.layers();
        if truncated.stage_count() != stage + 1 || layers.len() < keep || layers[..keep] != base.layers()[..keep] {
            return Err(NnError::InvalidModel(format!(
                "model is not '{model}' truncated at stage {stage}"
            )));
        }
        self.truncated
            .write()
            .expect("truncation cache poisoned")
            .insert((model.to_string(), stage), Arc::new(truncated));
        Ok(())
    }

    pub fn truncated(&self, model: &str, stage: usize) -> Option<Arc<ModelSpec>> {
        self.truncated
            .read()
            .expect("truncation cache poisoned")
            .get(&(model.to_string(), stage))
            .cloned()
    }

    /// Cached truncation, training a new head on `data` on first use.
    pub fn truncate_cached(
        &self,
        model: &str,
        stage: usize,
        data: &Dataset,
        hyper: &HeadHyper,
    ) -> Result<Arc<ModelSpec>, NnError> {
        if let Some(hit) = self.truncated(model, stage) {
            return Ok(hit);
        }
        let base = self
            .models
            .get(model)
            .ok_or_else(|| NnError::InvalidModel(format!("unknown model '{model}'")))?;
        let fresh = Arc::new(nn::truncate(base, stage, data, hyper)?);
        let mut cache = self.truncated.write().expect("truncation cache poisoned");
        Ok(cache
            .entry((model.to_string(), stage))
            .or_insert(fresh)
            .clone())
    }
}
