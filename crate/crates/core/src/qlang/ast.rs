use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attribution::Rect;

/// Byte range in the query text. Spans never take part in AST equality, so
/// a parsed query equals one built by hand.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ident {
    pub name: String,
    #[serde(skip)]
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            span: Span::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Star,
    /// Stage index, at least 1.
    Layer(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowTerm {
    Name(Ident),
    Rect(Rect),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoinKind {
    Join,
    /// Anti-join.
    LeftJoin,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinClause {
    pub kind: JoinKind,
    pub sub: Box<QueryAst>,
}

/// `select (*|l) from f(x) [where w] [(join|left join) (query)]`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryAst {
    pub target: Target,
    pub model: Ident,
    pub input: Ident,
    #[serde(default, rename = "where")]
    pub where_: Option<WindowTerm>,
    #[serde(default)]
    pub join: Option<JoinClause>,
    #[serde(skip)]
    pub span: Span,
    #[serde(skip)]
    pub target_span: Span,
    #[serde(skip)]
    pub where_span: Span,
}

impl QueryAst {
    pub fn new(target: Target, model: &str, input: &str) -> Self {
        Self {
            target,
            model: Ident::new(model),
            input: Ident::new(input),
            where_: None,
            join: None,
            span: Span::default(),
            target_span: Span::default(),
            where_span: Span::default(),
        }
    }

    pub fn with_where(mut self, term: WindowTerm) -> Self {
        self.where_ = Some(term);
        self
    }

    pub fn with_join(mut self, kind: JoinKind, sub: QueryAst) -> Self {
        self.join = Some(JoinClause {
            kind,
            sub: Box::new(sub),
        });
        self
    }

    /// Nesting depth; a query without a join clause has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.join.as_ref().map_or(0, |j| j.sub.depth())
    }
}

/// Canonical text: lowercase keywords, single spaces,
/// `rect(r0, c0, r1, c1)`.
pub fn print(ast: &QueryAst) -> String {
    ast.to_string()
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("select ")?;
        match self.target {
            Target::Star => f.write_str("*")?,
            Target::Layer(l) => write!(f, "{l}")?,
        }
        write!(f, " from {}({})", self.model.name, self.input.name)?;
        match &self.where_ {
            Some(WindowTerm::Name(name)) => write!(f, " where {}", name.name)?,
            Some(WindowTerm::Rect(r)) => write!(f, " where rect({}, {}, {}, {})", r.r0, r.c0, r.r1, r.c1)?,
            None => {}
        }
        if let Some(join) = &self.join {
            let keyword = match join.kind {
                JoinKind::Join => "join",
                JoinKind::LeftJoin => "left join",
            };
            write!(f, " {keyword} ({})", join.sub)?;
        }
        Ok(())
    }
}
