use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{normalize, plan, validate, AlgebraExpr, LeafPlan, Plan, Registry, ValidationError};
use crate::attribution::{
    attribute, attribute_cross, join_maps, mean_update, target_class, AttributionError,
    AttributionMap, AttributionResult, Backend, BackendConfig, Window,
};
use crate::nn::{ModelSpec, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("expression failed validation: {}", summarize(.0))]
    Invalid(Vec<ValidationError>),
    #[error("no truncated model for '{model}' at stage {stage}; run truncate on '{model}' with --stage {stage} first")]
    MissingTruncation { model: String, stage: usize },
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

fn summarize(errors: &[ValidationError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Target class and resolved stage of one leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafTarget {
    pub model: String,
    pub input: String,
    /// Stage whose model was attributed; equals the stage count for the full
    /// model.
    pub stage: usize,
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub normalized: AlgebraExpr,
    pub result: AttributionResult,
    /// One entry per leaf, left to right.
    pub targets: Vec<LeafTarget>,
    /// Observations about the query that did not prevent evaluation.
    pub notes: Vec<String>,
}

/// Validates, normalizes and evaluates `expr`.
pub fn evaluate(expr: &AlgebraExpr, cfg: &BackendConfig, registry: &Registry) -> Result<Evaluation, EvalError> {
    validate(expr, registry).map_err(EvalError::Invalid)?;
    cfg.validate()?;
    let normalized = normalize(expr);
    let mut ctx = Ctx {
        cfg,
        registry,
        targets: Vec::new(),
        notes: Vec::new(),
    };
    let result = ctx.run(&plan(&normalized))?;
    Ok(Evaluation {
        normalized,
        result,
        targets: ctx.targets,
        notes: ctx.notes,
    })
}

struct Resolved {
    model: Arc<ModelSpec>,
    input: Arc<Tensor>,
    window: Window,
    class: usize,
}

struct Ctx<'a> {
    cfg: &'a BackendConfig,
    registry: &'a Registry,
    targets: Vec<LeafTarget>,
    notes: Vec<String>,
}

impl Ctx<'_> {
    fn run(&mut self, plan: &Plan) -> Result<AttributionResult, EvalError> {
        match plan {
            Plan::Leaf(leaf) => {
                let r = self.resolve(leaf)?;
                let xbar = self.registry.baseline(r.input.shape());
                let map = attribute(self.cfg, &r.model, &r.input, &xbar, r.class, &r.window)?;
                Ok(AttributionResult::Single(map))
            }
            Plan::Join(left, right) => {
                let stages_before = self.targets.len();
                let l = self.run_single(left)?;
                let r = self.run_single(right)?;
                let stages: Vec<usize> = self.targets[stages_before..].iter().map(|t| t.stage).collect();
                if stages.windows(2).any(|p| p[0] != p[1]) {
                    self.notes.push(format!("join operands attribute different stages {stages:?}"));
                }
                Ok(AttributionResult::Single(join_maps(&l, &r, self.cfg.epsilon)?))
            }
            Plan::AntiJoin { leaves, cross_model } => {
                let resolved = leaves.iter().map(|l| self.resolve(l)).collect::<Result<Vec<_>, _>>()?;
                if *cross_model {
                    let [f, f2] = resolved.as_slice() else {
                        unreachable!("validation admits only binary cross-model anti-joins")
                    };
                    let xbar = self.registry.baseline(f.input.shape());
                    let map = attribute_cross(self.cfg, &f.model, &f2.model, &f.input, &xbar, f.class, &f.window)?;
                    return Ok(AttributionResult::Single(map));
                }
                if let [a, b] = resolved.as_slice() {
                    return Ok(AttributionResult::Pair {
                        left: self.against(a, b)?,
                        right: self.against(b, a)?,
                    });
                }
                let mut maps = Vec::with_capacity(resolved.len());
                for (i, own) in resolved.iter().enumerate() {
                    let mut mean = vec![0.0; own.input.len()];
                    for (count, other) in resolved.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o).enumerate() {
                        let m = self.against(own, other)?;
                        for (acc, v) in mean.iter_mut().zip(m.values()) {
                            mean_update(acc, *v, count + 1);
                        }
                    }
                    maps.push(AttributionMap::from_parts(own.input.shape(), mean));
                }
                Ok(AttributionResult::Group(maps))
            }
        }
    }

    fn run_single(&mut self, plan: &Plan) -> Result<AttributionMap, EvalError> {
        match self.run(plan)? {
            AttributionResult::Single(m) => Ok(m),
            _ => unreachable!("validation keeps anti-joins out of joins"),
        }
    }

    /// `own` attributed with `other`'s input as baseline.
    fn against(&self, own: &Resolved, other: &Resolved) -> Result<AttributionMap, EvalError> {
        let shared = self.cfg.ig_antijoin_shared_baseline && self.cfg.backend == Backend::IntegratedGradients;
        let xbar = if shared {
            self.registry.baseline(own.input.shape())
        } else {
            (*other.input).clone()
        };
        Ok(attribute(self.cfg, &own.model, &own.input, &xbar, own.class, &own.window)?)
    }

    fn resolve(&mut self, leaf: &LeafPlan) -> Result<Resolved, EvalError> {
        let base = self
            .registry
            .model(&leaf.model)
            .expect("validated model reference")
            .clone();
        let input = self
            .registry
            .input(&leaf.input)
            .expect("validated input reference")
            .clone();
        let stages = base.stage_count();
        let stage = leaf.layer.unwrap_or(stages);
        let model = if stage == stages {
            base.clone()
        } else {
            self.registry
                .truncated(&leaf.model, stage)
                .ok_or_else(|| EvalError::MissingTruncation {
                    model: leaf.model.clone(),
                    stage,
                })?
        };
        // The target follows the full model's prediction so that every
        // stage explains the same class.
        let class = target_class(self.cfg, &base, &input)?;
        self.targets.push(LeafTarget {
            model: leaf.model.clone(),
            input: leaf.input.clone(),
            stage,
            class,
        });
        let window = leaf.window.clone().unwrap_or_else(|| Window::full(input.len()));
        Ok(Resolved {
            model,
            input,
            window,
            class,
        })
    }
}
