use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{JoinKind, QueryAst, Span, Target, WindowTerm};
use super::{LocatedError, QueryError};
use crate::algebra::{validate, AlgebraExpr, Registry};
use crate::attribution::WindowSpec;

/// What a query identifier stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Binding {
    Model { reference: String },
    /// `shape` resolves inline `rect(...)` windows.
    Input { reference: String, shape: Vec<usize> },
    Window { window: WindowSpec },
}

impl Binding {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Binding::Model { .. } => "model",
            Binding::Input { .. } => "input",
            Binding::Window { .. } => "window",
        }
    }
}

/// Identifier table. A name keeps the kind it was first bound with.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bindings(BTreeMap<String, Binding>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, binding: Binding) -> Result<&mut Self, QueryError> {
        let name = name.into();
        if let Some(old) = self.0.get(&name) {
            if old.kind_name() != binding.kind_name() {
                return Err(QueryError::KindMismatch {
                    name,
                    expected: old.kind_name(),
                    found: binding.kind_name(),
                    offset: 0,
                });
            }
        }
        self.0.insert(name, binding);
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Binding)> {
        self.0.iter()
    }
}

/// Lowers `ast` to an operator expression without validating it.
pub fn lower(ast: &QueryAst, bindings: &Bindings) -> Result<AlgebraExpr, QueryError> {
    let mut spans = Vec::new();
    lower_at(ast, bindings, "$".into(), &mut spans)
}

/// Lowers and validates `ast`; validation errors carry the query offset of
/// the offending clause.
pub fn compile(ast: &QueryAst, bindings: &Bindings, registry: &Registry) -> Result<AlgebraExpr, QueryError> {
    let mut spans = Vec::new();
    let expr = lower_at(ast, bindings, "$".into(), &mut spans)?;
    validate(&expr, registry).map_err(|errors| {
        QueryError::Invalid(
            errors
                .into_iter()
                .map(|error| {
                    let offset = spans
                        .iter()
                        .filter(|(path, _)| error.location.starts_with(path.as_str()))
                        .max_by_key(|(path, _)| path.len())
                        .map_or(0, |(_, span)| span.start);
                    LocatedError { error, offset }
                })
                .collect(),
        )
    })?;
    Ok(expr)
}

fn lower_at(
    ast: &QueryAst,
    bindings: &Bindings,
    path: String,
    spans: &mut Vec<(String, Span)>,
) -> Result<AlgebraExpr, QueryError> {
    let level_path = if ast.join.is_some() {
        spans.push((path.clone(), ast.span));
        format!("{path}.left")
    } else {
        path.clone()
    };

    let model = match lookup(bindings, &ast.model.name, ast.model.span)? {
        Binding::Model { reference } => reference.clone(),
        other => return Err(mismatch(&ast.model.name, "model", other, ast.model.span)),
    };
    let (input, shape) = match lookup(bindings, &ast.input.name, ast.input.span)? {
        Binding::Input { reference, shape } => (reference.clone(), shape.clone()),
        other => return Err(mismatch(&ast.input.name, "input", other, ast.input.span)),
    };

    let mut node_path = level_path.clone();
    let mut expr = AlgebraExpr::identity(model, input);
    if let Some(term) = &ast.where_ {
        let spec = match term {
            WindowTerm::Rect(rect) => WindowSpec::Rect(*rect),
            WindowTerm::Name(name) => match lookup(bindings, &name.name, name.span)? {
                Binding::Window { window } => window.clone(),
                other => return Err(mismatch(&name.name, "window", other, name.span)),
            },
        };
        let window = spec.resolve(&shape).map_err(|e| QueryError::Window {
            offset: ast.where_span.start,
            message: e.to_string(),
        })?;
        spans.push((node_path.clone(), ast.where_span));
        node_path.push_str(".child");
        if let Target::Layer(l) = ast.target {
            expr = expr.select(l);
        }
        expr = expr.project(window);
    } else if let Target::Layer(l) = ast.target {
        expr = expr.select(l);
    }
    if let Target::Layer(_) = ast.target {
        spans.push((node_path.clone(), ast.target_span));
        node_path.push_str(".child");
    }
    spans.push((node_path, Span::new(ast.model.span.start, ast.input.span.end + 1)));

    match &ast.join {
        None => Ok(expr),
        Some(join) => {
            let right = lower_at(&join.sub, bindings, format!("{path}.right"), spans)?;
            Ok(match join.kind {
                JoinKind::Join => expr.join(right),
                JoinKind::LeftJoin => expr.antijoin(right),
            })
        }
    }
}

fn lookup<'b>(bindings: &'b Bindings, name: &str, span: Span) -> Result<&'b Binding, QueryError> {
    bindings.get(name).ok_or_else(|| QueryError::Unbound {
        name: name.to_string(),
        offset: span.start,
    })
}

fn mismatch(name: &str, expected: &'static str, found: &Binding, span: Span) -> QueryError {
    QueryError::KindMismatch {
        name: name.to_string(),
        expected,
        found: found.kind_name(),
        offset: span.start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::normalize;
    use crate::attribution::{Rect, Window};
    use crate::qlang::parse_query;

    fn bindings() -> Bindings {
        let mut b = Bindings::new();
        b.bind("f", Binding::Model { reference: "mf".into() }).unwrap();
        b.bind("f'", Binding::Model { reference: "mg".into() }).unwrap();
        b.bind("x", Binding::Input { reference: "ix".into(), shape: vec![3, 3] }).unwrap();
        b.bind("x'", Binding::Input { reference: "iy".into(), shape: vec![3, 3] }).unwrap();
        b.bind("w", Binding::Window { window: WindowSpec::Rect(Rect::new(0, 0, 1, 1).unwrap()) }).unwrap();
        b
    }

    #[test]
    fn select_where_commutes_after_normalization() {
        let expr = lower(&parse_query("select 2 from f(x) where w").unwrap(), &bindings()).unwrap();
        let window = Window::new(vec![0, 1, 3, 4], 9).unwrap();
        assert_eq!(expr, AlgebraExpr::identity("mf", "ix").select(2).project(window.clone()));
        let commuted = AlgebraExpr::identity("mf", "ix").project(window).select(2);
        assert_eq!(normalize(&expr), normalize(&commuted));
    }

    #[test]
    fn cross_model_left_join() {
        let expr = lower(&parse_query("select * from f(x) left join (select * from f'(x))").unwrap(), &bindings()).unwrap();
        assert!(matches!(expr, AlgebraExpr::AntiJoin { cross_model: true, .. }));
        let expr = lower(&parse_query("select * from f(x) left join (select * from f(x'))").unwrap(), &bindings()).unwrap();
        assert!(matches!(expr, AlgebraExpr::AntiJoin { cross_model: false, .. }));
    }

    #[test]
    fn unbound_and_kind_errors_have_offsets() {
        let text = "select * from f(x) where v";
        assert_eq!(
            lower(&parse_query(text).unwrap(), &bindings()),
            Err(QueryError::Unbound { name: "v".into(), offset: 25 })
        );
        let err = lower(&parse_query("select * from x(x)").unwrap(), &bindings()).unwrap_err();
        assert!(matches!(err, QueryError::KindMismatch { expected: "model", found: "input", offset: 14, .. }));
        let mut b = bindings();
        assert!(b.bind("w", Binding::Model { reference: "m".into() }).is_err());
    }

    #[test]
    fn out_of_bounds_rect_is_rejected() {
        let err = lower(&parse_query("select * from f(x) where rect(0, 0, 3, 0)").unwrap(), &bindings()).unwrap_err();
        assert!(matches!(err, QueryError::Window { offset: 19, .. }));
    }
}
