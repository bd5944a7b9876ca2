//! Query execution and the result file format.
//!
//! A result file holds the map(s) plus everything needed to recompute them:
//!
//! ```json
//! {"shape": [8, 8], "kind": "pair", "left": [...], "right": [...],
//!  "meta": {"backend": "shapley-exact", "seed": 0, "target_class": 2, ...}}
//! ```
//!
//! `kind` is `single` (`values`), `pair` (`left`, `right`) or `group`
//! (`maps`, one per anti-join operand). Files carry no timestamps, so equal
//! queries give byte-identical files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use attrql_core::algebra::{evaluate, AlgebraExpr, EvalError, LeafTarget, Registry};
use attrql_core::attribution::{AttributionMap, AttributionResult, Backend, BackendConfig};
use attrql_core::nn::{ModelSpec, Tensor};
use attrql_core::qlang::{compile, parse_query, Binding, Bindings, QueryError};

use crate::store::{Kind, Store, StoreError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResultBody {
    Single { values: Vec<f64> },
    Pair { left: Vec<f64>, right: Vec<f64> },
    Group { maps: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub backend: Backend,
    pub seed: u64,
    /// Class attributed for the first operand.
    pub target_class: usize,
    pub targets: Vec<LeafTarget>,
    /// Window of the first operand; `None` is every feature.
    pub window: Option<Vec<usize>>,
    pub query: String,
    /// Normalized expression over store refs.
    pub expr: AlgebraExpr,
    pub config: BackendConfig,
    pub bindings: Bindings,
    /// Ref of a non-default baseline input.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub shape: Vec<usize>,
    #[serde(flatten)]
    pub body: ResultBody,
    pub meta: ResultMeta,
}

impl ResultFile {
    pub fn result(&self) -> AttributionResult {
        let map = |v: &Vec<f64>| AttributionMap::new(self.shape.clone(), v.clone()).expect("result maps match their shape");
        match &self.body {
            ResultBody::Single { values } => AttributionResult::Single(map(values)),
            ResultBody::Pair { left, right } => AttributionResult::Pair {
                left: map(left),
                right: map(right),
            },
            ResultBody::Group { maps } => AttributionResult::Group(maps.iter().map(map).collect()),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl RunError {
    /// Short machine-readable error class; the validation kind when there
    /// is one.
    pub fn kind(&self) -> String {
        match self {
            RunError::Query(QueryError::Invalid(errors)) => errors
                .first()
                .map_or("invalid".into(), |e| e.error.kind.as_str().to_string()),
            RunError::Query(QueryError::Lex { .. }) => "lex".into(),
            RunError::Query(QueryError::Parse { .. }) => "syntax".into(),
            RunError::Query(QueryError::Unbound { .. }) => "unbound".into(),
            RunError::Query(QueryError::KindMismatch { .. }) => "kind-mismatch".into(),
            RunError::Query(QueryError::Window { .. }) => "window".into(),
            RunError::Eval(EvalError::Invalid(errors)) => errors
                .first()
                .map_or("invalid".into(), |e| e.kind.as_str().to_string()),
            RunError::Eval(EvalError::MissingTruncation { .. }) => "missing-truncation".into(),
            RunError::Eval(EvalError::Attribution(_)) => "attribution".into(),
        }
    }

    /// Error body for clients: `kind`, `message`, and per-rule details.
    pub fn payload(&self) -> Value {
        let errors: Vec<Value> = match self {
            RunError::Query(QueryError::Invalid(errors)) => errors
                .iter()
                .map(|e| {
                    json!({
                        "kind": e.error.kind,
                        "location": e.error.location,
                        "message": e.error.message,
                        "rule": e.error.kind.rule(),
                        "offset": e.offset,
                    })
                })
                .collect(),
            RunError::Eval(EvalError::Invalid(errors)) => errors
                .iter()
                .map(|e| json!({"kind": e.kind, "location": e.location, "message": e.message, "rule": e.kind.rule()}))
                .collect(),
            RunError::Query(e) => vec![json!({"kind": self.kind(), "message": e.to_string(), "offset": e.offset()})],
            RunError::Eval(e) => vec![json!({"kind": self.kind(), "message": e.to_string()})],
        };
        json!({"kind": self.kind(), "message": self.to_string(), "errors": errors})
    }
}

/// Parses, binds, validates and evaluates `text`.
pub fn run_query(
    text: &str,
    bindings: &Bindings,
    registry: &Registry,
    cfg: &BackendConfig,
    baseline: Option<String>,
) -> Result<ResultFile, RunError> {
    let ast = parse_query(text)?;
    let expr = compile(&ast, bindings, registry)?;
    let ev = evaluate(&expr, cfg, registry)?;
    let body = match &ev.result {
        AttributionResult::Single(m) => ResultBody::Single {
            values: m.values().to_vec(),
        },
        AttributionResult::Pair { left, right } => ResultBody::Pair {
            left: left.values().to_vec(),
            right: right.values().to_vec(),
        },
        AttributionResult::Group(maps) => ResultBody::Group {
            maps: maps.iter().map(|m| m.values().to_vec()).collect(),
        },
    };
    let window = attrql_core::algebra::plan(&ev.normalized);
    let window = first_window(&window);
    Ok(ResultFile {
        shape: ev.result.shape().to_vec(),
        body,
        meta: ResultMeta {
            backend: cfg.backend,
            seed: cfg.seed,
            target_class: ev.targets[0].class,
            targets: ev.targets,
            window,
            query: text.to_string(),
            expr: ev.normalized,
            config: cfg.clone(),
            bindings: bindings.clone(),
            baseline,
            notes: ev.notes,
        },
    })
}

fn first_window(plan: &attrql_core::algebra::Plan) -> Option<Vec<usize>> {
    use attrql_core::algebra::Plan;
    match plan {
        Plan::Leaf(leaf) => leaf.window.as_ref().map(|w| w.indices().to_vec()),
        Plan::Join(left, _) => first_window(left),
        Plan::AntiJoin { leaves, .. } => leaves[0].window.as_ref().map(|w| w.indices().to_vec()),
    }
}

/// Registry holding every model and input named in `bindings`, loaded from
/// `store` by ref, with every truncation the store has indexed.
pub fn registry_from_store(store: &Store, bindings: &Bindings) -> Result<Registry, StoreError> {
    let mut registry = Registry::new();
    for (_, binding) in bindings.iter() {
        match binding {
            Binding::Model { reference } => {
                let model: ModelSpec = store.get(Kind::Model, reference)?;
                let stages = model.stage_count();
                registry.add_model(reference.clone(), model);
                for stage in 1..stages {
                    if let Some(t) = store.truncation(reference, stage)? {
                        let truncated: ModelSpec = store.get(Kind::Model, &t)?;
                        registry
                            .add_truncated(reference, stage, truncated)
                            .map_err(|e| StoreError::Io(std::io::Error::other(e.to_string())))?;
                    }
                }
            }
            Binding::Input { reference, .. } => {
                let input: Tensor = store.get(Kind::Input, reference)?;
                registry.add_input(reference.clone(), input);
            }
            Binding::Window { .. } => {}
        }
    }
    Ok(registry)
}
