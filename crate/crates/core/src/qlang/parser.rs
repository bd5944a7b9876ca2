use super::ast::{Ident, JoinClause, JoinKind, QueryAst, Span, Target, WindowTerm};
use super::lexer::{tokenize, Token, TokenKind};
use super::QueryError;
use crate::attribution::Rect;

/// Tokenizes and parses `text`.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    parse(&tokenize(text)?, text.len())
}

/// Recursive-descent parse of a token stream. `text_len` is the offset
/// reported for errors at end of input.
///
/// ```text
/// query  := SELECT (STAR | INT) FROM IDENT '(' IDENT ')'
///           [WHERE window] [(JOIN | LEFT JOIN) '(' query ')']
/// window := IDENT | 'rect' '(' INT ',' INT ',' INT ',' INT ')'
/// ```
pub fn parse(tokens: &[Token], text_len: usize) -> Result<QueryAst, QueryError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        text_len,
    };
    let ast = p.query()?;
    if let Some(tok) = p.peek() {
        return Err(p.unexpected(tok, &["'where'", "'join'", "'left join'", "end of input"]));
    }
    Ok(ast)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    text_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self, ahead: usize) -> Option<TokenKind> {
        self.tokens.get(self.pos + ahead).map(|t| t.kind)
    }

    fn unexpected(&self, tok: &Token, expected: &[&str]) -> QueryError {
        QueryError::Parse {
            offset: tok.offset,
            found: format!("'{}'", tok.lexeme),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn error_here(&self, expected: &[&str]) -> QueryError {
        match self.peek() {
            Some(tok) => self.unexpected(tok, expected),
            None => QueryError::Parse {
                offset: self.text_len,
                found: "end of input".into(),
                expected: expected.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<&'a Token, QueryError> {
        self.expect_one_of(kind, &[kind.describe()])
    }

    fn expect_one_of(&mut self, kind: TokenKind, expected: &[&str]) -> Result<&'a Token, QueryError> {
        match self.peek() {
            Some(tok) if tok.kind == kind => {
                self.pos += 1;
                Ok(tok)
            }
            _ => Err(self.error_here(expected)),
        }
    }

    fn ident(&mut self) -> Result<Ident, QueryError> {
        let tok = self.expect(TokenKind::Ident)?;
        Ok(Ident {
            name: tok.lexeme.clone(),
            span: Span::new(tok.offset, tok.end()),
        })
    }

    fn int(&mut self) -> Result<(usize, &'a Token), QueryError> {
        let tok = self.expect(TokenKind::Int)?;
        let value = tok.lexeme.parse().expect("lexer checked the integer range");
        Ok((value, tok))
    }

    fn query(&mut self) -> Result<QueryAst, QueryError> {
        let start = self.expect(TokenKind::Select)?.offset;
        let target_tok = self.peek();
        let target = match target_tok.map(|t| t.kind) {
            Some(TokenKind::Star) => {
                self.pos += 1;
                Target::Star
            }
            Some(TokenKind::Int) => {
                let (l, tok) = self.int()?;
                if l == 0 {
                    return Err(self.unexpected(tok, &["positive stage index"]));
                }
                Target::Layer(l)
            }
            _ => return Err(self.error_here(&["'*'", "stage index"])),
        };
        let target_span = target_tok.map_or_else(Span::default, |t| Span::new(t.offset, t.end()));
        self.expect(TokenKind::From)?;
        let model = self.ident()?;
        self.expect(TokenKind::LParen)?;
        let input = self.ident()?;
        let mut end = self.expect(TokenKind::RParen)?.end();

        let mut where_ = None;
        let mut where_span = Span::default();
        if self.peek_kind(0) == Some(TokenKind::Where) {
            let kw = self.expect(TokenKind::Where)?;
            let (term, term_end) = self.window_term()?;
            where_span = Span::new(kw.offset, term_end);
            end = term_end;
            where_ = Some(term);
        }

        let mut join = None;
        let kind = match self.peek_kind(0) {
            Some(TokenKind::Join) => {
                self.pos += 1;
                Some(JoinKind::Join)
            }
            Some(TokenKind::Left) => {
                self.pos += 1;
                self.expect_one_of(TokenKind::Join, &["'join' after 'left'"])?;
                Some(JoinKind::LeftJoin)
            }
            _ => None,
        };
        if let Some(kind) = kind {
            self.expect_one_of(TokenKind::LParen, &["'(' after join"])?;
            let sub = self.query()?;
            end = self.expect(TokenKind::RParen)?.end();
            join = Some(JoinClause {
                kind,
                sub: Box::new(sub),
            });
        }

        Ok(QueryAst {
            target,
            model,
            input,
            where_,
            join,
            span: Span::new(start, end),
            target_span,
            where_span,
        })
    }

    fn window_term(&mut self) -> Result<(WindowTerm, usize), QueryError> {
        let name = self.ident().map_err(|_| self.error_here(&["window name", "'rect('"]))?;
        let is_rect = name.name.eq_ignore_ascii_case("rect") && self.peek_kind(0) == Some(TokenKind::LParen);
        if !is_rect {
            let end = name.span.end;
            return Ok((WindowTerm::Name(name), end));
        }
        self.expect(TokenKind::LParen)?;
        let (r0, first) = self.int()?;
        let mut rest = [0usize; 3];
        for v in rest.iter_mut() {
            self.expect(TokenKind::Comma)?;
            *v = self.int()?.0;
        }
        let close = self.expect(TokenKind::RParen)?;
        let [c0, r1, c1] = rest;
        let rect = Rect::new(r0, c0, r1, c1).ok_or_else(|| QueryError::Parse {
            offset: first.offset,
            found: format!("rect({r0}, {c0}, {r1}, {c1})"),
            expected: vec!["rectangle with r0 <= r1 and c0 <= c1".into()],
        })?;
        Ok((WindowTerm::Rect(rect), close.end()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlang::print;

    #[test]
    fn antijoin_statement() {
        let ast = parse_query("select * from f(x) left join (select * from f(x'))").unwrap();
        let expected = QueryAst::new(Target::Star, "f", "x")
            .with_join(JoinKind::LeftJoin, QueryAst::new(Target::Star, "f", "x'"));
        assert_eq!(ast, expected);
    }

    #[test]
    fn spans_cover_clauses() {
        let text = "select 2 from f(x) where w";
        let ast = parse_query(text).unwrap();
        assert_eq!((ast.span.start, ast.span.end), (0, text.len()));
        assert_eq!(&text[ast.target_span.start..ast.target_span.end], "2");
        assert_eq!(&text[ast.where_span.start..ast.where_span.end], "where w");
    }

    #[test]
    fn dangling_join_expects_paren() {
        let err = parse_query("select * from f(x) join").unwrap_err();
        let QueryError::Parse { offset, expected, found } = err else { panic!() };
        assert_eq!(offset, 23);
        assert_eq!(found, "end of input");
        assert_eq!(expected, ["'(' after join"]);
    }

    #[test]
    fn rejects_bad_targets_and_rects() {
        assert!(matches!(parse_query("select 0 from f(x)"), Err(QueryError::Parse { offset: 7, .. })));
        assert!(parse_query("select * from f(x) where rect(2, 0, 1, 0)").is_err());
        assert!(parse_query("select * from f(x) where rect(0, 0, 1)").is_err());
        assert!(parse_query("select * from f(x) x").is_err());
    }

    #[test]
    fn rect_keyword_only_with_paren() {
        let named = parse_query("select * from f(x) where rect").unwrap();
        assert_eq!(named.where_, Some(WindowTerm::Name(Ident::new("rect"))));
        let lit = parse_query("SELECT * FROM f(x) WHERE Rect(0,1,2,3)").unwrap();
        assert_eq!(print(&lit), "select * from f(x) where rect(0, 1, 2, 3)");
    }
}
