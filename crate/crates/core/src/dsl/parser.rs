//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := "-"? atom ("^" INT)? ;
//! atom   := NUMBER | "i" | IDENT | FUNC "(" expr ")" | "(" expr ")" ;
//! ```

use super::{Expr, Func};
use num_complex::Complex64;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    BadNumber(String),
    BadExponent(String),
    UnknownIdentifier(String),
    ParticleOutOfRange { particle: usize, count: usize },
    ComponentOutOfRange(usize),
    ExpectedParen(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token '{t}'"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number '{s}'"),
            ParseErrorKind::BadExponent(s) => {
                write!(f, "exponent must be a non-negative integer, got '{s}'")
            }
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier '{s}'"),
            ParseErrorKind::ParticleOutOfRange { particle, count } => write!(
                f,
                "particle index {particle} out of range (system has {count} particles)"
            ),
            ParseErrorKind::ComponentOutOfRange(mu) => {
                write!(f, "space-time component {mu} out of range 0..=3")
            }
            ParseErrorKind::ExpectedParen(name) => write!(f, "expected '(' after '{name}'"),
        }
    }
}

/// A syntax or binding error; `position` is a byte offset into the source.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Number(s) | Tok::Ident(s) => write!(f, "{s}"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Caret => write!(f, "^"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match ch {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            out.push((t, start));
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            out.push((Tok::Number(src[start..i].to_string()), start));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let c = src[start..].chars().next().unwrap_or('?');
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar(c),
                position: start,
            });
        }
    }
    Ok(out)
}

/// Splits `x<K>_<MU>` into its indices.
fn coordinate_parts(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('x')?;
    let (k, mu) = rest.split_once('_')?;
    if k.is_empty() || mu.is_empty() {
        return None;
    }
    if !k.bytes().all(|b| b.is_ascii_digit()) || !mu.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((k.parse().ok()?, mu.parse().ok()?))
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    particles: usize,
    params: &'a HashMap<String, Complex64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            kind,
            position: self.here(),
        })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            let op = op.clone();
            match op {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek() {
            let op = op.clone();
            match op {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let negate = if self.peek() == Some(&Tok::Minus) {
            self.bump();
            true
        } else {
            false
        };
        let mut base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            match self.bump() {
                Some(Tok::Number(s)) if s.bytes().all(|b| b.is_ascii_digit()) => {
                    let n = s.parse::<u32>().map_err(|_| ParseError {
                        kind: ParseErrorKind::BadExponent(s.clone()),
                        position: self.toks[self.pos - 1].1,
                    })?;
                    base = Expr::Pow(Box::new(base), n);
                }
                Some(t) => {
                    self.pos -= 1;
                    return self.err(ParseErrorKind::BadExponent(t.to_string()));
                }
                None => return self.err(ParseErrorKind::UnexpectedEnd),
            }
        }
        Ok(if negate { Expr::Neg(Box::new(base)) } else { base })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let position = self.here();
        match self.bump() {
            None => self.err(ParseErrorKind::UnexpectedEnd),
            Some(Tok::Number(s)) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::real(v)),
                _ => Err(ParseError {
                    kind: ParseErrorKind::BadNumber(s),
                    position,
                }),
            },
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    Some(t) => {
                        self.pos -= 1;
                        self.err(ParseErrorKind::UnexpectedToken(t.to_string()))
                    }
                    None => self.err(ParseErrorKind::UnexpectedEnd),
                }
            }
            Some(Tok::Ident(name)) => self.identifier(name, position),
            Some(t) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(t.to_string()),
                position,
            }),
        }
    }

    fn identifier(&mut self, name: String, position: usize) -> Result<Expr, ParseError> {
        let fail = |kind| Err(ParseError { kind, position });
        if name == "i" {
            return Ok(Expr::Num(Complex64::new(0.0, 1.0)));
        }
        if let Some((k, mu)) = coordinate_parts(&name) {
            if k == 0 || k > self.particles {
                return fail(ParseErrorKind::ParticleOutOfRange {
                    particle: k,
                    count: self.particles,
                });
            }
            if mu > 3 {
                return fail(ParseErrorKind::ComponentOutOfRange(mu));
            }
            return Ok(Expr::coord(k, mu));
        }
        if let Some(f) = Func::from_name(&name) {
            if self.peek() != Some(&Tok::LParen) {
                return self.err(ParseErrorKind::ExpectedParen(name));
            }
            self.bump();
            let arg = self.expr()?;
            return match self.bump() {
                Some(Tok::RParen) => Ok(Expr::Call(f, Box::new(arg))),
                Some(t) => {
                    self.pos -= 1;
                    self.err(ParseErrorKind::UnexpectedToken(t.to_string()))
                }
                None => self.err(ParseErrorKind::UnexpectedEnd),
            };
        }
        if let Some(v) = self.params.get(&name) {
            return Ok(Expr::param(&name, *v));
        }
        fail(ParseErrorKind::UnknownIdentifier(name))
    }
}

/// Parses `src` for an `particles`-particle system with the given parameter bindings.
pub fn parse(
    src: &str,
    particles: usize,
    params: &HashMap<String, Complex64>,
) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            position: 0,
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
        particles,
        params,
    };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        let t = t.to_string();
        return p.err(ParseErrorKind::UnexpectedToken(t));
    }
    Ok(e)
}

/// Parses and evaluates a coordinate-free expression such as `-0.5`, `2i` or `1+2*i`.
pub fn parse_constant(src: &str) -> Result<Complex64, ParseError> {
    let e = parse(src, 0, &HashMap::new())?;
    e.evaluate(&super::SpacetimeConfig(Vec::new()))
        .map_err(|_| ParseError {
            kind: ParseErrorKind::BadNumber(src.to_string()),
            position: 0,
        })
}
