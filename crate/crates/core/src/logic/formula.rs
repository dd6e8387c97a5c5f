//! Propositional formulas over conjunction and implication.
//!
//! Grammar (lowest precedence first):
//!
//! ```text
//! impl := conj ( "->" impl )?      right-associative
//! conj := atom ( "&" atom )*       left-associative
//! atom := IDENT | "(" impl ")"
//! ```

use std::fmt;

use super::LogicError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(String),
    Conj(Box<Formula>, Box<Formula>),
    Impl(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(symbol: impl Into<String>) -> Self {
        Formula::Atom(symbol.into())
    }

    pub fn conj(left: Formula, right: Formula) -> Self {
        Formula::Conj(Box::new(left), Box::new(right))
    }

    pub fn implies(antecedent: Formula, consequent: Formula) -> Self {
        Formula::Impl(Box::new(antecedent), Box::new(consequent))
    }

    /// Left-nested conjunction of `parts`, `None` when empty.
    pub fn conj_all<I: IntoIterator<Item = Formula>>(parts: I) -> Option<Formula> {
        parts.into_iter().reduce(Formula::conj)
    }

    /// Flattened conjunct list; `(a & b) & c` and `a & (b & c)` both give `[a, b, c]`.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        self.collect_conjuncts(&mut out);
        out
    }

    fn collect_conjuncts<'a>(&'a self, out: &mut Vec<&'a Formula>) {
        match self {
            Formula::Conj(l, r) => {
                l.collect_conjuncts(out);
                r.collect_conjuncts(out);
            }
            other => out.push(other),
        }
    }

    /// Every atom symbol occurring in the formula, in left-to-right order.
    pub fn symbols(&self) -> Vec<&str> {
        match self {
            Formula::Atom(s) => vec![s.as_str()],
            Formula::Conj(l, r) | Formula::Impl(l, r) => {
                let mut v = l.symbols();
                v.extend(r.symbols());
                v
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(s) => f.write_str(s),
            Formula::Conj(l, r) => {
                match **l {
                    Formula::Impl(..) => write!(f, "({l})")?,
                    _ => write!(f, "{l}")?,
                }
                f.write_str(" & ")?;
                match **r {
                    Formula::Atom(_) => write!(f, "{r}"),
                    _ => write!(f, "({r})"),
                }
            }
            Formula::Impl(a, c) => {
                match **a {
                    Formula::Impl(..) => write!(f, "({a})")?,
                    _ => write!(f, "{a}")?,
                }
                write!(f, " -> {c}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    And,
    Arrow,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, LogicError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'&' => {
                toks.push((i, Tok::And));
                i += 1;
            }
            b'(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                toks.push((i, Tok::Arrow));
                i += 2;
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(LogicError::UnknownToken { offset: i, token: ch.to_string() });
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn err(&self, message: &str) -> LogicError {
        LogicError::Syntax { offset: self.offset(), message: message.to_string() }
    }

    fn implication(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.conjunction()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, LogicError> {
        let mut acc = self.primary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let rhs = self.primary()?;
            acc = Formula::conj(acc, rhs);
        }
        Ok(acc)
    }

    fn primary(&mut self) -> Result<Formula, LogicError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Formula::Atom(s))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.implication()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(_) => Err(self.err("expected a symbol or '('")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Parses `text` under `->` < `&` precedence.
pub fn parse_formula(text: &str) -> Result<Formula, LogicError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let f = p.implication()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(f)
}
