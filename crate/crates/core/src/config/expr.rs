//! Arithmetic expressions over `t`, `x1`, `x2`.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := primary ('^' exponent)?
//! exponent := '-'? power            (must fold to an integer constant)
//! primary  := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X1,
    X2,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X1 => "x1",
            Var::X2 => "x2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Num(0.0)
    }

    pub fn eval(&self, t: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X1) => x1,
            Expr::Var(Var::X2) => x2,
            Expr::Neg(a) => -a.eval(t, x1, x2),
            Expr::Add(a, b) => a.eval(t, x1, x2) + b.eval(t, x1, x2),
            Expr::Sub(a, b) => a.eval(t, x1, x2) - b.eval(t, x1, x2),
            Expr::Mul(a, b) => a.eval(t, x1, x2) * b.eval(t, x1, x2),
            Expr::Div(a, b) => a.eval(t, x1, x2) / b.eval(t, x1, x2),
            Expr::Pow(a, n) => a.eval(t, x1, x2).powi(*n),
            Expr::Call(f, a) => f.apply(a.eval(t, x1, x2)),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    /// Symbolic derivative, simplified by constant folding and 0/1 elimination.
    pub fn differentiate(&self, v: Var) -> Result<Expr> {
        if !self.depends_on(v) {
            return Ok(Expr::zero());
        }
        Ok(match self {
            Expr::Num(_) => Expr::zero(),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(v)?),
            Expr::Add(a, b) => add(a.differentiate(v)?, b.differentiate(v)?),
            Expr::Sub(a, b) => sub(a.differentiate(v)?, b.differentiate(v)?),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(v)?, (**b).clone()),
                mul((**a).clone(), b.differentiate(v)?),
            ),
            Expr::Div(a, b) => {
                let da = a.differentiate(v)?;
                let db = b.differentiate(v)?;
                div(
                    sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    pow((**b).clone(), 2),
                )
            }
            Expr::Pow(a, n) => mul(
                mul(Expr::Num(*n as f64), pow((**a).clone(), n - 1)),
                a.differentiate(v)?,
            ),
            Expr::Call(f, a) => {
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Exp => call(Func::Exp, (**a).clone()),
                    Func::Abs => {
                        return Err(Error::NonDifferentiable(format!(
                            "abs({}) depends on {}",
                            a,
                            v.name()
                        )))
                    }
                };
                mul(outer, a.differentiate(v)?)
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Num(c) => write!(f, "{c}")?,
            Expr::Var(v) => f.write_str(v.name())?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_at(f, 3)?;
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write_at(f, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) {
                    " + "
                } else {
                    " - "
                })?;
                b.write_at(f, 2)?;
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_at(f, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) {
                    "*"
                } else {
                    "/"
                })?;
                b.write_at(f, 3)?;
            }
            Expr::Pow(a, n) => {
                a.write_at(f, 5)?;
                write!(f, "^{n}")?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, 0)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        parse_expr(s)
    }
}

fn num_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(c) => Some(*c),
        _ => None,
    }
}

fn folded(c: f64) -> Option<Expr> {
    c.is_finite().then_some(Expr::Num(c))
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => Expr::Num(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => folded(x + y).unwrap_or_else(|| Expr::Add(a.into(), b.into())),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(a.into(), b.into()),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => folded(x - y).unwrap_or_else(|| Expr::Sub(a.into(), b.into())),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(a.into(), b.into()),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => folded(x * y).unwrap_or_else(|| Expr::Mul(a.into(), b.into())),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        // Keep constants leading and merged: c1*(c2*e) -> (c1*c2)*e.
        (None, Some(_)) => mul(b, a),
        (Some(x), None) => match b {
            Expr::Mul(l, r) if num_of(&l).is_some() => mul(Expr::Num(x * num_of(&l).unwrap()), *r),
            b => Expr::Mul(a.into(), b.into()),
        },
        _ => Expr::Mul(a.into(), b.into()),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => folded(x / y).unwrap_or_else(|| Expr::Div(a.into(), b.into())),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(a.into(), b.into()),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (num_of(&a), n) {
        (_, 0) => Expr::Num(1.0),
        (_, 1) => a,
        (Some(x), _) => folded(x.powi(n)).unwrap_or_else(|| Expr::Pow(a.into(), n)),
        _ => Expr::Pow(a.into(), n),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    match num_of(&a) {
        Some(x) => folded(f.apply(x)).unwrap_or_else(|| Expr::Call(f, a.into())),
        None => Expr::Call(f, a.into()),
    }
}

/// Parses an expression; see the module docs for the grammar.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("an expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("an operator or end of input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn error(&self, expected: &str) -> Error {
        Error::SyntaxError {
            pos: self.pos,
            expected: expected.to_string(),
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(lhs.into(), self.term()?.into());
            } else if self.eat(b'-') {
                lhs = Expr::Sub(lhs.into(), self.term()?.into());
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(lhs.into(), self.unary()?.into());
            } else if self.eat(b'/') {
                lhs = Expr::Div(lhs.into(), self.unary()?.into());
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            // A negated literal is stored as a negative literal so that printing
            // and re-parsing reach a fixed point.
            return Ok(match self.unary()? {
                Expr::Num(c) => Expr::Num(-c),
                e => Expr::Neg(e.into()),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let start = self.pos;
        let negative = self.eat(b'-');
        let e = self.power()?;
        let value = e.eval(0.0, 0.0, 0.0);
        let exponent_is_const =
            !e.depends_on(Var::T) && !e.depends_on(Var::X1) && !e.depends_on(Var::X2);
        if !exponent_is_const || value.fract() != 0.0 || value.abs() > i32::MAX as f64 {
            return Err(Error::SyntaxError {
                pos: start,
                expected: "an integer exponent".into(),
            });
        }
        let n = value as i32;
        Ok(Expr::Pow(base.into(), if negative { -n } else { n }))
    }

    fn primary(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let func = match ident {
                    "t" => return Ok(Expr::Var(Var::T)),
                    "x1" => return Ok(Expr::Var(Var::X1)),
                    "x2" => return Ok(Expr::Var(Var::X2)),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "abs" => Func::Abs,
                    _ => {
                        self.pos = start;
                        return Err(self.error("t, x1, x2, pi, or one of sin/cos/exp/abs"));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.error("'('"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("')'"));
                }
                Ok(Expr::Call(func, arg.into()))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("')'"));
                }
                Ok(e)
            }
            _ => Err(self.error("a number, variable, function or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("a digit"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => {
                self.pos = start;
                Err(self.error("a finite number"))
            }
        }
    }
}

/// The time-dependent reaction/convection family used by the linear experiments.
pub fn family_coefficients(i: i32, j: i32, k: i32, l: i32, m: i32, n: i32) -> (Expr, Expr, Expr) {
    let p = |s: String| parse_expr(&s).expect("family template is valid");
    (
        p(format!("-sin(t)*cos({i}*x1) + sin(5*t)*sin({j}*x2) - 3")),
        p(format!("cos(t)*sin(-({k})*x1) - cos(3*t)*cos({l}*x2)")),
        p(format!("sin(-t)*sin({m}*x1) - cos(2*t)*sin({n}*x2)")),
    )
}

/// Parameter tuples for which the family is open-loop unstable.
pub const FAMILY_TUPLES: [[i32; 6]; 6] = [
    [1, 1, 1, 1, 1, 1],
    [1, 2, 2, 1, 1, 1],
    [2, -1, 1, -3, 5, 1],
    [-1, 5, 3, 1, 1, 5],
    [1, 2, 3, 4, 5, 6],
    [6, -2, 5, 3, 4, 1],
];
