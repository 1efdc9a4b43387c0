use std::fmt;

use super::ast::Span;
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    /// Punctuation and operators, e.g. `++`, `<<=`, `{`.
    Punct(&'static str),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{}`", s),
            TokenKind::Int(v) => write!(f, "integer {}", v),
            TokenKind::Punct(p) => write!(f, "`{}`", p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

// Longest first so that maximal munch picks `<<=` over `<<` over `<`.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "<=", ">=",
    "==", "!=", "&&", "||", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "=", "(", ")",
    "{", "}", "[", "]", ";", ",", "@", ".", ":",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, FrontendError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;

    let span = |start: usize, end: usize, line: u32, line_start: usize| Span {
        line,
        col: (start - line_start) as u32 + 1,
        start: start as u32,
        end: end as u32,
    };

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if source[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if source[i..].starts_with("/*") {
            let open = span(i, i + 2, line, line_start);
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(FrontendError::Lex { span: open, message: "unterminated comment".into() });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(source[start..i].to_string()),
                span: span(start, i, line, line_start),
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let (radix, digits_start) = if source[i..].starts_with("0x") || source[i..].starts_with("0X") {
                (16, i + 2)
            } else if source[i..].starts_with("0b") || source[i..].starts_with("0B") {
                (2, i + 2)
            } else {
                (10, i)
            };
            i = digits_start;
            while i < bytes.len() && (bytes[i] as char).is_digit(radix) {
                i += 1;
            }
            // Allow the common `u`/`U` suffix on literals.
            let digits_end = i;
            if i < bytes.len() && (bytes[i] == b'u' || bytes[i] == b'U') {
                i += 1;
            }
            let sp = span(start, i, line, line_start);
            if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                return Err(FrontendError::Lex { span: sp, message: "malformed integer literal".into() });
            }
            let text = &source[digits_start..digits_end];
            let value = i64::from_str_radix(text, radix)
                .map_err(|_| FrontendError::Lex { span: sp, message: "malformed integer literal".into() })?;
            tokens.push(Token { kind: TokenKind::Int(value), span: sp });
            continue;
        }
        if c == b'\'' {
            // Character literal: 'a' or '\n'-style escapes.
            let start = i;
            let rest = &bytes[i + 1..];
            let (value, len) = match rest {
                [b'\\', e, b'\'', ..] => {
                    let v = match e {
                        b'n' => b'\n',
                        b'r' => b'\r',
                        b't' => b'\t',
                        b'0' => 0,
                        b'\\' => b'\\',
                        b'\'' => b'\'',
                        _ => {
                            return Err(FrontendError::Lex {
                                span: span(start, start + 3, line, line_start),
                                message: "unknown escape in character literal".into(),
                            })
                        }
                    };
                    (v, 4)
                }
                [ch, b'\'', ..] if *ch != b'\\' && *ch != b'\n' => (*ch, 3),
                _ => {
                    return Err(FrontendError::Lex {
                        span: span(start, start + 1, line, line_start),
                        message: "unterminated character literal".into(),
                    })
                }
            };
            i += len;
            tokens.push(Token { kind: TokenKind::Int(value as i64), span: span(start, i, line, line_start) });
            continue;
        }
        if c == b'#' {
            return Err(FrontendError::Lex {
                span: span(i, i + 1, line, line_start),
                message: "preprocessor directives are not supported".into(),
            });
        }
        match PUNCTS.iter().find(|p| source[i..].starts_with(**p)) {
            Some(p) => {
                tokens.push(Token { kind: TokenKind::Punct(p), span: span(i, i + p.len(), line, line_start) });
                i += p.len();
            }
            None => {
                let ch = source[i..].chars().next().unwrap_or('?');
                return Err(FrontendError::Lex {
                    span: span(i, i + ch.len_utf8(), line, line_start),
                    message: format!("illegal character `{}`", ch),
                });
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn increments_statement() {
        assert_eq!(
            kinds("rx_in++;"),
            vec![TokenKind::Ident("rx_in".into()), TokenKind::Punct("++"), TokenKind::Punct(";")]
        );
    }

    #[test]
    fn empty_input() {
        assert!(kinds("").is_empty());
        assert!(kinds("  // only a comment\n/* block */").is_empty());
    }

    #[test]
    fn hex_literal() {
        assert_eq!(kinds("0x5F"), vec![TokenKind::Int(95)]);
        assert_eq!(kinds("0b101 7u 'A'"), vec![TokenKind::Int(5), TokenKind::Int(7), TokenKind::Int(65)]);
    }

    #[test]
    fn positions_are_tracked() {
        let toks = tokenize("a\n  b = 1;").unwrap();
        assert_eq!((toks[1].span.line, toks[1].span.col), (2, 3));
        assert_eq!(toks[1].span.start, 4);
    }

    #[test]
    fn maximal_munch() {
        assert_eq!(kinds("x <<= 2"), vec![TokenKind::Ident("x".into()), TokenKind::Punct("<<="), TokenKind::Int(2)]);
    }

    #[test]
    fn lex_errors() {
        assert!(matches!(tokenize("a $ b"), Err(FrontendError::Lex { .. })));
        assert!(matches!(tokenize("/* never closed"), Err(FrontendError::Lex { .. })));
        assert!(matches!(tokenize("'a"), Err(FrontendError::Lex { .. })));
        let err = tokenize("x = 1;\n  `").unwrap_err();
        match err {
            FrontendError::Lex { span, .. } => assert_eq!((span.line, span.col), (2, 3)),
            _ => unreachable!(),
        }
    }
}
