use serde::{Deserialize, Serialize};

use super::AlgebraExpr;
use crate::attribution::Window;

/// A fully resolved leaf of a normalized expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafPlan {
    pub model: String,
    pub input: String,
    /// `None` is the full model.
    pub layer: Option<usize>,
    /// `None` is every feature.
    pub window: Option<Window>,
}

/// Evaluation form of a normalized expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Plan {
    Leaf(LeafPlan),
    Join(Box<Plan>, Box<Plan>),
    /// Flattened anti-join chain, in operand order.
    AntiJoin { leaves: Vec<LeafPlan>, cross_model: bool },
}

#[derive(Clone, Default)]
struct Pending {
    window: Option<Window>,
    layer: Option<usize>,
}

/// Rewrites `expr` into canonical form:
///
/// - projections and selections are pushed to the leaves, each leaf becoming
///   `Project(Select(Identity))` with absent wrappers omitted;
/// - stacked windows are intersected and stacked selections keep the smaller
///   stage index;
/// - join and anti-join chains are flattened and re-associated to the right.
///
/// Assumes `expr` passed validation. Idempotent.
pub fn normalize(expr: &AlgebraExpr) -> AlgebraExpr {
    push_down(expr, &Pending::default())
}

fn push_down(expr: &AlgebraExpr, pending: &Pending) -> AlgebraExpr {
    match expr {
        AlgebraExpr::Identity { .. } => {
            let mut out = expr.clone();
            if let Some(layer) = pending.layer {
                out = out.select(layer);
            }
            if let Some(window) = &pending.window {
                out = out.project(window.clone());
            }
            out
        }
        AlgebraExpr::Select { child, layer } => {
            let next = Pending {
                layer: Some(pending.layer.map_or(*layer, |outer| outer.min(*layer))),
                ..pending.clone()
            };
            push_down(child, &next)
        }
        AlgebraExpr::Project { child, window } => {
            let next = Pending {
                window: Some(match &pending.window {
                    Some(outer) => outer.intersect(window),
                    None => window.clone(),
                }),
                ..pending.clone()
            };
            push_down(child, &next)
        }
        AlgebraExpr::Join { .. } => {
            let mut operands = Vec::new();
            flatten_join(expr, &mut operands);
            let operands: Vec<AlgebraExpr> = operands.iter().map(|o| push_down(o, pending)).collect();
            fold_right(operands, AlgebraExpr::join)
        }
        AlgebraExpr::AntiJoin { .. } => {
            let mut operands = Vec::new();
            flatten_antijoin(expr, &mut operands);
            let operands: Vec<AlgebraExpr> = operands.iter().map(|o| push_down(o, pending)).collect();
            fold_right(operands, AlgebraExpr::antijoin)
        }
    }
}

fn flatten_join<'a>(expr: &'a AlgebraExpr, out: &mut Vec<&'a AlgebraExpr>) {
    match expr {
        AlgebraExpr::Join { left, right } => {
            flatten_join(left, out);
            flatten_join(right, out);
        }
        other => out.push(other),
    }
}

fn flatten_antijoin<'a>(expr: &'a AlgebraExpr, out: &mut Vec<&'a AlgebraExpr>) {
    match expr {
        AlgebraExpr::AntiJoin { left, right, .. } => {
            flatten_antijoin(left, out);
            flatten_antijoin(right, out);
        }
        other => out.push(other),
    }
}

fn fold_right(mut operands: Vec<AlgebraExpr>, combine: fn(AlgebraExpr, AlgebraExpr) -> AlgebraExpr) -> AlgebraExpr {
    let mut acc = operands.pop().expect("chains have at least two operands");
    while let Some(next) = operands.pop() {
        acc = combine(next, acc);
    }
    acc
}

/// Converts a normalized expression into its evaluation plan.
pub fn plan(normalized: &AlgebraExpr) -> Plan {
    match normalized {
        AlgebraExpr::Join { left, right } => Plan::Join(Box::new(plan(left)), Box::new(plan(right))),
        AlgebraExpr::AntiJoin { cross_model, .. } => {
            let mut operands = Vec::new();
            flatten_antijoin(normalized, &mut operands);
            Plan::AntiJoin {
                leaves: operands.into_iter().map(leaf_plan).collect(),
                cross_model: *cross_model,
            }
        }
        leaf => Plan::Leaf(leaf_plan(leaf)),
    }
}

fn leaf_plan(expr: &AlgebraExpr) -> LeafPlan {
    let mut window = None;
    let mut layer = None;
    let mut cur = expr;
    loop {
        match cur {
            AlgebraExpr::Project { child, window: w } => {
                window = Some(match window {
                    Some(outer) => w.intersect(&outer),
                    None => w.clone(),
                });
                cur = child;
            }
            AlgebraExpr::Select { child, layer: l } => {
                layer = Some(layer.map_or(*l, |outer: usize| outer.min(*l)));
                cur = child;
            }
            AlgebraExpr::Identity { model, input } => {
                return LeafPlan {
                    model: model.clone(),
                    input: input.clone(),
                    layer,
                    window,
                };
            }
            _ => panic!("operand of a normalized anti-join chain must be a leaf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(ix: &[usize]) -> Window {
        Window::new(ix.to_vec(), 8).unwrap()
    }

    #[test]
    fn stacked_projections_intersect() {
        let e = AlgebraExpr::identity("f", "x").project(w(&[0, 1, 2])).project(w(&[1, 2, 3]));
        assert_eq!(normalize(&e), AlgebraExpr::identity("f", "x").project(w(&[1, 2])));
    }

    #[test]
    fn projection_and_selection_commute() {
        let a = AlgebraExpr::identity("f", "x").select(2).project(w(&[0, 3]));
        let b = AlgebraExpr::identity("f", "x").project(w(&[0, 3])).select(2);
        assert_eq!(normalize(&a), normalize(&b));
        assert_eq!(normalize(&a), a);
    }

    #[test]
    fn stacked_selects_keep_outer() {
        let e = AlgebraExpr::identity("f", "x").select(3).select(2);
        assert_eq!(normalize(&e), AlgebraExpr::identity("f", "x").select(2));
    }

    #[test]
    fn selection_distributes_over_antijoin() {
        let e = AlgebraExpr::identity("f", "x")
            .antijoin(AlgebraExpr::identity("f", "x2"))
            .select(1);
        let expected = AlgebraExpr::identity("f", "x")
            .select(1)
            .antijoin(AlgebraExpr::identity("f", "x2").select(1));
        assert_eq!(normalize(&e), expected);
    }

    #[test]
    fn chains_reassociate_right() {
        let x = |n: &str| AlgebraExpr::identity("f", n);
        let left_assoc = x("a").join(x("b")).join(x("c"));
        let right_assoc = x("a").join(x("b").join(x("c")));
        assert_eq!(normalize(&left_assoc), right_assoc);
        let p = plan(&normalize(&x("a").antijoin(x("b")).antijoin(x("c"))));
        let Plan::AntiJoin { leaves, cross_model } = p else { panic!() };
        assert_eq!(leaves.iter().map(|l| l.input.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(!cross_model);
    }

    #[test]
    fn normalize_is_idempotent() {
        let x = |n: &str| AlgebraExpr::identity("f", n);
        let e = x("a")
            .select(3)
            .join(x("b").project(w(&[1, 2])).join(x("c")))
            .project(w(&[1, 2, 5]))
            .select(2);
        let once = normalize(&e);
        assert_eq!(normalize(&once), once);
    }
}
