//! Recursive-descent parser for family expressions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! Names are `z1..zN` (or `z` when N = 1), the family index `n`, the
//! constants `i`, `pi`, `e`, and any constant bound in [`ParseContext`].

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::ast::{Constant, Expr, Func};
use super::ParseError;

/// Ambient dimension plus named constants visible to the parser.
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    pub ambient_dim: usize,
    pub constants: BTreeMap<String, Complex64>,
}

impl ParseContext {
    pub fn new(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            constants: BTreeMap::new(),
        }
    }

    pub fn with_constant(mut self, name: impl Into<String>, value: Complex64) -> Self {
        self.constants.insert(name.into(), value);
        self
    }
}

/// Parses `source` with no named constants.
pub fn parse(source: &str, ambient_dim: usize) -> Result<Expr, ParseError> {
    parse_with(source, &ParseContext::new(ambient_dim))
}

pub fn parse_with(source: &str, ctx: &ParseContext) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Syntax {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        ctx,
        end: source.len(),
    };
    let expr = parser.sum()?;
    if let Some(tok) = parser.peek() {
        return Err(ParseError::Syntax {
            position: tok.start,
            message: format!("unexpected {}", tok.kind),
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl std::fmt::Display for TokenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenKind::Number(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "'{s}'"),
            TokenKind::Plus => f.write_str("'+'"),
            TokenKind::Minus => f.write_str("'-'"),
            TokenKind::Star => f.write_str("'*'"),
            TokenKind::Slash => f.write_str("'/'"),
            TokenKind::Caret => f.write_str("'^'"),
            TokenKind::LParen => f.write_str("'('"),
            TokenKind::RParen => f.write_str("')'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    start: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
                let end = scan_number(bytes, i);
                let text = &source[i..end];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    message: format!("malformed number '{text}'"),
                })?;
                i = end;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = i + 1;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                let ident = source[i..end].to_string();
                i = end;
                tokens.push(Token {
                    kind: TokenKind::Ident(ident),
                    start,
                });
                continue;
            }
            _ => {
                let ch = source[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    position: start,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        tokens.push(Token { kind, start });
        i += 1;
    }
    Ok(tokens)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    // Exponent only when digits follow, so `2*e` style input is not swallowed.
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            return j;
        }
    }
    i
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    ctx: &'a ParseContext,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.start)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.position(),
            message: message.into(),
        })
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        match self.peek_kind() {
            Some(k) if *k == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(k) => {
                let msg = format!("expected {kind}, found {k}");
                self.syntax(msg)
            }
            None => self.syntax(format!("expected {kind}, found end of input")),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek_kind() {
                Some(TokenKind::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(TokenKind::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek_kind() {
                Some(TokenKind::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(TokenKind::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek_kind() == Some(&TokenKind::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek_kind() != Some(&TokenKind::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let exp_pos = self.position();
        let exponent = self.unary()?;
        if exponent.max_var() > 0 {
            return Err(ParseError::Syntax {
                position: exp_pos,
                message: "exponent may not depend on the variables".into(),
            });
        }
        if let Expr::Num(v) = exponent {
            if v.fract() != 0.0 {
                return Err(ParseError::Syntax {
                    position: exp_pos,
                    message: format!("exponent {v} is not an integer"),
                });
            }
        }
        Ok(Expr::Pow(Box::new(base), Box::new(exponent)))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.syntax("unexpected end of input");
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.sum()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.name(&name, tok.start),
            other => Err(ParseError::Syntax {
                position: tok.start,
                message: format!("unexpected {other}"),
            }),
        }
    }

    fn name(&mut self, name: &str, start: usize) -> Result<Expr, ParseError> {
        if let Some(func) = Func::from_name(name) {
            self.expect(TokenKind::LParen)?;
            let arg = self.sum()?;
            self.expect(TokenKind::RParen)?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(value) = self.ctx.constants.get(name) {
            return Ok(Expr::Named(name.to_string(), *value));
        }
        match name {
            "i" => return Ok(Expr::Const(Constant::I)),
            "pi" => return Ok(Expr::Const(Constant::Pi)),
            "e" => return Ok(Expr::Const(Constant::E)),
            "n" => return Ok(Expr::Param),
            "z" if self.ctx.ambient_dim == 1 => return Ok(Expr::Var(1)),
            _ => {}
        }
        if let Some(digits) = name.strip_prefix('z') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    message: format!("bad variable '{name}'"),
                })?;
                if index == 0 {
                    return Err(ParseError::Syntax {
                        position: start,
                        message: "variables are numbered from z1".into(),
                    });
                }
                if index > self.ctx.ambient_dim {
                    return Err(ParseError::Dimension {
                        index,
                        dim: self.ctx.ambient_dim,
                    });
                }
                return Ok(Expr::Var(index));
            }
        }
        Err(ParseError::Syntax {
            position: start,
            message: format!("unknown symbol '{name}'"),
        })
    }
}
