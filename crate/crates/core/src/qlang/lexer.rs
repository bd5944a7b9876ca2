use std::fmt;

use super::QueryError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Select,
    Star,
    Int,
    From,
    Where,
    Join,
    Left,
    Ident,
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    pub fn describe(self) -> &'static str {
        match self {
            TokenKind::Select => "'select'",
            TokenKind::Star => "'*'",
            TokenKind::Int => "integer",
            TokenKind::From => "'from'",
            TokenKind::Where => "'where'",
            TokenKind::Join => "'join'",
            TokenKind::Left => "'left'",
            TokenKind::Ident => "identifier",
            TokenKind::LParen => "'('",
            TokenKind::RParen => "')'",
            TokenKind::Comma => "','",
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// Byte offset of the first character.
    pub offset: usize,
}

impl Token {
    pub fn end(&self) -> usize {
        self.offset + self.lexeme.len()
    }
}

fn keyword(word: &str) -> Option<TokenKind> {
    match word.to_ascii_lowercase().as_str() {
        "select" => Some(TokenKind::Select),
        "from" => Some(TokenKind::From),
        "where" => Some(TokenKind::Where),
        "join" => Some(TokenKind::Join),
        "left" => Some(TokenKind::Left),
        _ => None,
    }
}

/// True if `word` lexes as a single identifier token.
pub fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
        && keyword(word).is_none()
}

/// Splits `text` into tokens. Keywords are case-insensitive; identifiers are
/// `[A-Za-z_][A-Za-z0-9_']*` and case-sensitive.
pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b'*' => Some(TokenKind::Star),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = single {
            tokens.push(Token {
                kind,
                lexeme: (c as char).to_string(),
                offset: start,
            });
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let lexeme = &text[start..i];
            if lexeme.parse::<usize>().is_err() {
                return Err(QueryError::Lex {
                    offset: start,
                    message: format!("integer '{lexeme}' is too large"),
                });
            }
            tokens.push(Token {
                kind: TokenKind::Int,
                lexeme: lexeme.to_string(),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'') {
                i += 1;
            }
            let lexeme = &text[start..i];
            tokens.push(Token {
                kind: keyword(lexeme).unwrap_or(TokenKind::Ident),
                lexeme: lexeme.to_string(),
                offset: start,
            });
        } else {
            let ch = text[start..].chars().next().expect("non-empty remainder");
            return Err(QueryError::Lex {
                offset: start,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    Ok(tokens)
}
