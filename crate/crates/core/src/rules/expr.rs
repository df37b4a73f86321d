//! Boolean expressions over simulator parameters.
//!
//! Canonical text form:
//!
//! ```text
//! expr := conj ("||" conj)*
//! conj := atom ("&" atom)*
//! atom := ["!"] "(" name op number ")" | ["!"] "(" name "=" level ")" | "!" "(" conj ")"
//! op   := "<" | "<=" | ">" | ">="
//! ```
//!
//! The last atom form negates a whole rule condition. The parser is more
//! lenient than the emitter: it also accepts bare comparisons, nested
//! parentheses and arbitrary negation.

use std::fmt;

use crate::error::{Error, Result};
use crate::param_space::{Chromosome, ParameterSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Op::Lt => lhs < rhs,
            Op::Le => lhs <= rhs,
            Op::Gt => lhs > rhs,
            Op::Ge => lhs >= rhs,
        }
    }

    /// The operator of the negated comparison.
    pub fn complement(self) -> Op {
        match self {
            Op::Lt => Op::Ge,
            Op::Le => Op::Gt,
            Op::Gt => Op::Le,
            Op::Ge => Op::Lt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Cmp { param: String, op: Op, value: f64 },
    Eq { param: String, level: String },
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

impl Expr {
    pub fn cmp(param: impl Into<String>, op: Op, value: f64) -> Self {
        Expr::Cmp {
            param: param.into(),
            op,
            value,
        }
    }

    pub fn eq(param: impl Into<String>, level: impl Into<String>) -> Self {
        Expr::Eq {
            param: param.into(),
            level: level.into(),
        }
    }

    /// Negation without stacking a double negation.
    pub fn negate(self) -> Self {
        match self {
            Expr::Not(inner) => *inner,
            other => Expr::Not(Box::new(other)),
        }
    }

    /// Conjunction, flattening nested conjunctions; a single term is
    /// returned as is.
    pub fn all(terms: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Expr::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().expect("one term")
        } else {
            Expr::And(flat)
        }
    }

    pub fn any(terms: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Expr::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().expect("one term")
        } else {
            Expr::Or(flat)
        }
    }

    /// Parameter names mentioned anywhere in the expression.
    pub fn params(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Cmp { param, .. } | Expr::Eq { param, .. } => {
                if !out.contains(&param.as_str()) {
                    out.push(param);
                }
            }
            Expr::Not(e) => e.collect_params(out),
            Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| x.collect_params(out)),
        }
    }

    /// Checks every parameter and level against `space`.
    pub fn check(&self, space: &ParameterSpace) -> Result<()> {
        match self {
            Expr::Cmp { param, .. } => {
                let i = space.index_of(param).ok_or_else(|| Error::UnknownParameter(param.clone()))?;
                if space.spec(i).is_categorical() {
                    return Err(Error::Domain(format!("numeric comparison on categorical `{param}`")));
                }
                Ok(())
            }
            Expr::Eq { param, level } => {
                let i = space.index_of(param).ok_or_else(|| Error::UnknownParameter(param.clone()))?;
                match space.spec(i).levels() {
                    Some(levels) if levels.iter().any(|l| l == level) => Ok(()),
                    Some(_) => Err(Error::Domain(format!("unknown level `{level}` for `{param}`"))),
                    None => Err(Error::Domain(format!("level equality on numeric `{param}`"))),
                }
            }
            Expr::Not(e) => e.check(space),
            Expr::And(xs) | Expr::Or(xs) => xs.iter().try_for_each(|x| x.check(space)),
        }
    }

    pub fn eval(&self, c: &Chromosome) -> Result<bool> {
        match self {
            Expr::Cmp { param, op, value } => Ok(op.holds(c.get(param)?, *value)),
            Expr::Eq { param, level } => {
                let space = c.space();
                let i = space.index_of(param).ok_or_else(|| Error::UnknownParameter(param.clone()))?;
                let levels = space
                    .spec(i)
                    .levels()
                    .ok_or_else(|| Error::Domain(format!("level equality on numeric `{param}`")))?;
                Ok(levels.get(c.values()[i] as usize).is_some_and(|l| l == level))
            }
            Expr::Not(e) => Ok(!e.eval(c)?),
            Expr::And(xs) => {
                for x in xs {
                    if !x.eval(c)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Expr::Or(xs) => {
                for x in xs {
                    if x.eval(c)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Cmp { param, op, value } => write!(f, "({param} {} {value})", op.symbol()),
            Expr::Eq { param, level } => write!(f, "({param} = {level})"),
            Expr::Not(inner) => match **inner {
                Expr::Cmp { .. } | Expr::Eq { .. } => {
                    f.write_str("!")?;
                    inner.write(f)
                }
                _ => {
                    f.write_str("!(")?;
                    inner.write(f)?;
                    f.write_str(")")
                }
            },
            Expr::And(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" & ")?;
                    }
                    if matches!(x, Expr::Or(_) | Expr::And(_)) {
                        f.write_str("(")?;
                        x.write(f)?;
                        f.write_str(")")?;
                    } else {
                        x.write(f)?;
                    }
                }
                Ok(())
            }
            Expr::Or(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" || ")?;
                    }
                    if matches!(x, Expr::Or(_)) {
                        f.write_str("(")?;
                        x.write(f)?;
                        f.write_str(")")?;
                    } else {
                        x.write(f)?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Number(f64),
    Op(Op),
    Equals,
    Not,
    And,
    Or,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| Error::Parse { position, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push((start, Token::Open)),
            b')' => out.push((start, Token::Close)),
            b'!' => out.push((start, Token::Not)),
            b'&' => out.push((start, Token::And)),
            b'|' => {
                if bytes.get(i + 1) != Some(&b'|') {
                    return Err(err(start, "expected `||`".into()));
                }
                i += 1;
                out.push((start, Token::Or));
            }
            b'=' => out.push((start, Token::Equals)),
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => Op::Lt,
                    (b'<', true) => Op::Le,
                    (_, false) => Op::Gt,
                    (_, true) => Op::Ge,
                };
                if eq {
                    i += 1;
                }
                out.push((start, Token::Op(op)));
            }
            b'0'..=b'9' | b'-' | b'+' | b'.' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j];
                    let exp_sign = (d == b'-' || d == b'+') && matches!(bytes[j - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s = &text[i..j];
                let v: f64 = s.parse().map_err(|_| err(start, format!("bad number `{s}`")))?;
                out.push((start, Token::Number(v)));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i + 1;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((start, Token::Name(text[i..j].to_string())));
                i = j;
                continue;
            }
            _ => return Err(err(start, format!("unexpected character `{}`", text[i..].chars().next().unwrap_or('?')))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.conj()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            terms.push(self.conj()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one") } else { Expr::Or(terms) })
    }

    fn conj(&mut self) -> Result<Expr> {
        let mut terms = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(Expr::all(terms))
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.next() != Some(Token::Close) {
                    self.pos -= 1;
                    return self.fail("expected `)`");
                }
                Ok(e)
            }
            Some(Token::Name(_)) => self.comparison(),
            _ => self.fail("expected `!`, `(` or a parameter name"),
        }
    }

    fn comparison(&mut self) -> Result<Expr> {
        let Some(Token::Name(param)) = self.next() else {
            self.pos -= 1;
            return self.fail("expected a parameter name");
        };
        match self.next() {
            Some(Token::Op(op)) => match self.next() {
                Some(Token::Number(value)) => Ok(Expr::Cmp { param, op, value }),
                _ => {
                    self.pos -= 1;
                    self.fail("expected a number")
                }
            },
            Some(Token::Equals) => match self.next() {
                Some(Token::Name(level)) => Ok(Expr::Eq { param, level }),
                Some(Token::Number(v)) => Ok(Expr::Eq {
                    param,
                    level: v.to_string(),
                }),
                _ => {
                    self.pos -= 1;
                    self.fail("expected a level")
                }
            },
            _ => {
                self.pos -= 1;
                self.fail("expected a comparison operator or `=`")
            }
        }
    }
}

/// Parses an expression; see the module docs for the accepted syntax.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos < p.tokens.len() {
        return p.fail("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emission_round_trips() {
        let e = Expr::any(vec![
            Expr::cmp("a", Op::Gt, 1.5),
            Expr::all(vec![
                Expr::cmp("a", Op::Le, 1.5).negate(),
                Expr::all(vec![Expr::cmp("b", Op::Lt, -2.0), Expr::eq("c", "red")]).negate(),
                Expr::eq("c", "blue"),
            ]),
        ]);
        let text = e.to_string();
        assert_eq!(text, "(a > 1.5) || !(a <= 1.5) & !((b < -2) & (c = red)) & (c = blue)");
        assert_eq!(parse_expr(&text).unwrap(), e);
    }

    #[test]
    fn parser_is_lenient() {
        let a = parse_expr("x > 1 & !(y <= 2e-3 & z = q) || w >= -0.5").unwrap();
        let b = parse_expr("((x > 1) & !((y <= 0.002) & (z = q))) || (w >= -0.5)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_expr("(a > 1) & (b >> 2)") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 14),
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("(a > 1").is_err());
        assert!(parse_expr("a | b").is_err());
        assert!(parse_expr("").is_err());
    }

    #[test]
    fn double_negation_collapses() {
        let e = Expr::cmp("a", Op::Gt, 0.0);
        assert_eq!(e.clone().negate().negate(), e);
    }
}
