use std::fmt;

use serde::{Deserialize, Serialize};

use super::{is_cross_model_pair, AlgebraExpr, Registry};
use crate::attribution::Window;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationKind {
    WindowMismatch,
    LayerOrder,
    MixedJoinAntijoin,
    UndefinedComposition,
    UnknownRef,
    ShapeMismatch,
    LayerRange,
}

impl ValidationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationKind::WindowMismatch => "window-mismatch",
            ValidationKind::LayerOrder => "layer-order",
            ValidationKind::MixedJoinAntijoin => "mixed-join-antijoin",
            ValidationKind::UndefinedComposition => "undefined-composition",
            ValidationKind::UnknownRef => "unknown-ref",
            ValidationKind::ShapeMismatch => "shape-mismatch",
            ValidationKind::LayerRange => "layer-range",
        }
    }

    /// The composition rule behind the error, with the fix.
    pub fn rule(self) -> &'static str {
        match self {
            ValidationKind::WindowMismatch => {
                "projection over join/anti-join is conditional: Π_w(x) ⋈ Π_w'(x') and Π_w(x) ▷ Π_w'(x') need w = w'; project both operands onto the same window"
            }
            ValidationKind::LayerOrder => {
                "selection over selection is conditional: σ_l σ_l'(x) needs l <= l'; put the smaller stage index outermost"
            }
            ValidationKind::MixedJoinAntijoin => {
                "composition of join and anti-join is undefined; run them as separate queries"
            }
            ValidationKind::UndefinedComposition => {
                "composition is undefined: cross-model anti-join takes exactly one input under two different models, and anti-join chains of three or more operands need a single model"
            }
            ValidationKind::UnknownRef => "every leaf must name a registered model and input",
            ValidationKind::ShapeMismatch => {
                "inputs must match the model input shape, combined operands must share a shape, and windows must lie inside the input"
            }
            ValidationKind::LayerRange => "stage index must lie in 1..=n for the model's n stages",
        }
    }
}

impl fmt::Display for ValidationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationError {
    pub kind: ValidationKind,
    /// Path from the root, e.g. `$.left.child`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {} ({})", self.kind, self.location, self.message, self.kind.rule())
    }
}

impl std::error::Error for ValidationError {}

#[derive(Clone)]
struct Ctx {
    path: String,
    selects: Vec<(usize, String)>,
    window: Option<Window>,
    under_join: bool,
    under_antijoin: bool,
    parent_antijoin: bool,
}

impl Ctx {
    fn child(&self, step: &str) -> Ctx {
        Ctx {
            path: format!("{}.{step}", self.path),
            ..self.clone()
        }
    }
}

struct Leaf {
    model: String,
    input: String,
    shape: Option<Vec<usize>>,
    window: Option<Window>,
}

/// Reports every rule violation in `expr`; `Ok` iff there are none.
pub fn validate(expr: &AlgebraExpr, registry: &Registry) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let root = Ctx {
        path: "$".into(),
        selects: Vec::new(),
        window: None,
        under_join: false,
        under_antijoin: false,
        parent_antijoin: false,
    };
    walk(expr, &root, registry, &mut errors);
    let mut seen = std::collections::HashSet::new();
    errors.retain(|e| seen.insert(e.clone()));
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn push(errors: &mut Vec<ValidationError>, kind: ValidationKind, location: &str, message: String) {
    errors.push(ValidationError {
        kind,
        location: location.to_string(),
        message,
    });
}

fn walk(expr: &AlgebraExpr, ctx: &Ctx, reg: &Registry, errors: &mut Vec<ValidationError>) -> Vec<Leaf> {
    use ValidationKind::*;
    match expr {
        AlgebraExpr::Identity { model, input } => {
            let m = reg.model(model);
            let x = reg.input(input);
            if m.is_none() {
                push(errors, UnknownRef, &ctx.path, format!("unknown model '{model}'"));
            }
            if x.is_none() {
                push(errors, UnknownRef, &ctx.path, format!("unknown input '{input}'"));
            }
            if let (Some(m), Some(x)) = (m, x) {
                if x.shape() != m.input_shape() {
                    push(
                        errors,
                        ShapeMismatch,
                        &ctx.path,
                        format!(
                            "input '{input}' has shape {:?}, model '{model}' expects {:?}",
                            x.shape(),
                            m.input_shape()
                        ),
                    );
                }
            }
            if let Some(m) = m {
                for (layer, at) in &ctx.selects {
                    if *layer > m.stage_count() {
                        push(
                            errors,
                            LayerRange,
                            at,
                            format!("stage {layer} out of range 1..={} for model '{model}'", m.stage_count()),
                        );
                    }
                }
            }
            let window = ctx.window.clone();
            if let (Some(w), Some(x)) = (&window, x) {
                if let Err(e) = w.check_len(x.len()) {
                    push(errors, ShapeMismatch, &ctx.path, e.to_string());
                }
            }
            vec![Leaf {
                model: model.clone(),
                input: input.clone(),
                shape: x.map(|x| x.shape().to_vec()),
                window,
            }]
        }
        AlgebraExpr::Select { child, layer } => {
            if *layer == 0 {
                push(errors, LayerRange, &ctx.path, "stage indices start at 1".into());
            }
            if let Some((outer, _)) = ctx.selects.last() {
                if outer > layer {
                    push(
                        errors,
                        LayerOrder,
                        &ctx.path,
                        format!("σ_{outer} applied over σ_{layer} needs {outer} <= {layer}"),
                    );
                }
            }
            let mut next = ctx.child("child");
            next.selects.push((*layer, ctx.path.clone()));
            next.parent_antijoin = false;
            walk(child, &next, reg, errors)
        }
        AlgebraExpr::Project { child, window } => {
            let mut next = ctx.child("child");
            next.window = Some(match &ctx.window {
                Some(outer) => outer.intersect(window),
                None => window.clone(),
            });
            next.parent_antijoin = false;
            walk(child, &next, reg, errors)
        }
        AlgebraExpr::Join { left, right } | AlgebraExpr::AntiJoin { left, right, .. } => {
            let is_join = matches!(expr, AlgebraExpr::Join { .. });
            if (is_join && ctx.under_antijoin) || (!is_join && ctx.under_join) {
                push(
                    errors,
                    MixedJoinAntijoin,
                    &ctx.path,
                    "join and anti-join may not be nested inside each other".into(),
                );
            }
            let mut lctx = ctx.child("left");
            let mut rctx = ctx.child("right");
            for c in [&mut lctx, &mut rctx] {
                c.under_join |= is_join;
                c.under_antijoin |= !is_join;
                c.parent_antijoin = !is_join;
            }
            let mut leaves = walk(left, &lctx, reg, errors);
            leaves.extend(walk(right, &rctx, reg, errors));
            check_operands(&leaves, &ctx.path, errors);
            if let AlgebraExpr::AntiJoin { cross_model, .. } = expr {
                if *cross_model != is_cross_model_pair(left, right) {
                    push(
                        errors,
                        UndefinedComposition,
                        &ctx.path,
                        if *cross_model {
                            "cross-model anti-join needs one shared input and two different models".into()
                        } else {
                            "anti-join over one input and two different models must be cross-model".into()
                        },
                    );
                }
                if !ctx.parent_antijoin && leaves.len() >= 3 {
                    let first = &leaves[0].model;
                    if leaves.iter().any(|l| &l.model != first) {
                        push(
                            errors,
                            UndefinedComposition,
                            &ctx.path,
                            format!("{}-way anti-join mixes models", leaves.len()),
                        );
                    }
                }
            }
            leaves
        }
    }
}

/// Combined operands must share an input shape and a window.
fn check_operands(leaves: &[Leaf], path: &str, errors: &mut Vec<ValidationError>) {
    let known: Vec<(&Leaf, &Vec<usize>)> = leaves
        .iter()
        .filter_map(|l| l.shape.as_ref().map(|s| (l, s)))
        .collect();
    let Some(&(first, shape)) = known.first() else {
        return;
    };
    if let Some((other, other_shape)) = known.iter().find(|(_, s)| *s != shape) {
        push(
            errors,
            ValidationKind::ShapeMismatch,
            path,
            format!(
                "operands '{}' {:?} and '{}' {:?} differ in shape",
                first.input, shape, other.input, other_shape
            ),
        );
        return;
    }
    let len: usize = shape.iter().product();
    let resolved = |l: &Leaf| l.window.clone().unwrap_or_else(|| Window::full(len));
    let w0 = resolved(first);
    if let Some((other, _)) = known.iter().find(|(l, _)| resolved(l) != w0) {
        push(
            errors,
            ValidationKind::WindowMismatch,
            path,
            format!(
                "operand '{}({})' has window {:?} but '{}({})' has {:?}",
                first.model,
                first.input,
                w0.indices(),
                other.model,
                other.input,
                resolved(other).indices()
            ),
        );
    }
}
