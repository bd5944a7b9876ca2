//! Operator expressions: construction, validation against composition
//! rules, law-based normalization and evaluation.
//!
//! Composition rules enforced by [`validate`]:
//!
//! | outer \ inner | projection | selection | join | anti-join |
//! |---|---|---|---|---|
//! | projection | windows intersect | commute | operands share a window | operands share a window |
//! | selection | commute | `l <= l'` in `σ_l σ_l'` | distributes | distributes |
//! | join | distributes | distributes | associative | undefined |
//! | anti-join | distributes | distributes | undefined | associative |

mod eval;
mod normalize;
mod registry;
mod validate;

pub use eval::{evaluate, EvalError, Evaluation, LeafTarget};
pub use normalize::{normalize, plan, LeafPlan, Plan};
pub use registry::Registry;
pub use validate::{validate, ValidationError, ValidationKind};

use serde::{Deserialize, Serialize};

use crate::attribution::Window;

/// Operator composition tree. Leaves name a model and an input by registry
/// reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgebraExpr {
    Identity {
        model: String,
        input: String,
    },
    Project {
        child: Box<AlgebraExpr>,
        window: Window,
    },
    Select {
        child: Box<AlgebraExpr>,
        layer: usize,
    },
    /// Weighted sum of the operands' maps; the weight comes from the
    /// backend configuration.
    Join {
        left: Box<AlgebraExpr>,
        right: Box<AlgebraExpr>,
    },
    /// Each operand attributed against the other. `cross_model` marks the
    /// binary form over one input and two different models.
    AntiJoin {
        left: Box<AlgebraExpr>,
        right: Box<AlgebraExpr>,
        cross_model: bool,
    },
}

impl AlgebraExpr {
    pub fn identity(model: impl Into<String>, input: impl Into<String>) -> Self {
        AlgebraExpr::Identity {
            model: model.into(),
            input: input.into(),
        }
    }

    pub fn project(self, window: Window) -> Self {
        AlgebraExpr::Project {
            child: Box::new(self),
            window,
        }
    }

    pub fn select(self, layer: usize) -> Self {
        AlgebraExpr::Select {
            child: Box::new(self),
            layer,
        }
    }

    pub fn join(self, right: AlgebraExpr) -> Self {
        AlgebraExpr::Join {
            left: Box::new(self),
            right: Box::new(right),
        }
    }

    /// Anti-join with `cross_model` set from the operands' structure.
    pub fn antijoin(self, right: AlgebraExpr) -> Self {
        let cross_model = is_cross_model_pair(&self, &right);
        AlgebraExpr::AntiJoin {
            left: Box::new(self),
            right: Box::new(right),
            cross_model,
        }
    }

    /// `(model, input)` of every leaf, left to right.
    pub fn leaves(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<(&'a str, &'a str)>) {
        match self {
            AlgebraExpr::Identity { model, input } => out.push((model, input)),
            AlgebraExpr::Project { child, .. } | AlgebraExpr::Select { child, .. } => {
                child.collect_leaves(out)
            }
            AlgebraExpr::Join { left, right } | AlgebraExpr::AntiJoin { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }
}

/// Binary anti-join over the same input and two different models.
pub(crate) fn is_cross_model_pair(left: &AlgebraExpr, right: &AlgebraExpr) -> bool {
    match (left.leaves().as_slice(), right.leaves().as_slice()) {
        ([(m1, x1)], [(m2, x2)]) => x1 == x2 && m1 != m2,
        _ => false,
    }
}
