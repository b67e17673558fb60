//! Closed-form coefficient expressions in x1..xd and t.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' ['+' | '-'] integer)?
//! atom    := number | 'x'k | 't' | 'pi' | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | sqrt
//! ```

mod problem;

use std::fmt;

pub use problem::{Coefficients, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Spatial coordinate, zero-based (`x1` is `X(0)`).
    X(usize),
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    Expected(&'static str),
    UnknownIdentifier(String),
    Arity { func: &'static str, got: usize },
    BadNumber,
    BadExponent,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::Expected(what) => write!(f, "expected {what}"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier {s:?}"),
            ParseErrorKind::Arity { func, got } => {
                write!(f, "{func} takes exactly 1 argument, got {got}")
            }
            ParseErrorKind::BadNumber => f.write_str("malformed number"),
            ParseErrorKind::BadExponent => f.write_str("exponent must be an integer literal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    Domain(f64),
    #[error("non-finite result")]
    NonFinite,
    #[error("variable x{0} is not defined in dimension {1}")]
    UnboundVariable(usize, usize),
}

impl EvalError {
    /// Overflow to infinity is a numerical failure; the other cases are bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, EvalError::NonFinite)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&mut self) -> ParseError {
        match self.peek() {
            None => self.err(ParseErrorKind::UnexpectedEnd),
            Some(_) => {
                let c = std::str::from_utf8(&self.src[self.pos..])
                    .ok()
                    .and_then(|s| s.chars().next())
                    .unwrap_or('\u{fffd}');
                self.err(ParseErrorKind::UnexpectedChar(c))
            }
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let negative = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.peek() {
                None => self.err(ParseErrorKind::UnexpectedEnd),
                Some(_) => self.err(ParseErrorKind::BadExponent),
            });
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let value: i32 = digits.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::BadExponent,
        })?;
        Ok(Expr::Pow(
            Box::new(base),
            if negative { -value } else { value },
        ))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(match self.peek() {
                        None => self.err(ParseErrorKind::UnexpectedEnd),
                        Some(_) => self.err(ParseErrorKind::Expected("')'")),
                    });
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber,
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(ParseError {
                    offset: mark,
                    kind: ParseErrorKind::BadNumber,
                });
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::BadNumber,
        })?;
        if !value.is_finite() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber,
            });
        }
        Ok(Expr::Num(value))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.err(ParseErrorKind::Expected("'(' after function name")));
            }
            let mut args = vec![self.sum()?];
            while self.eat(b',') {
                args.push(self.sum()?);
            }
            if !self.eat(b')') {
                return Err(match self.peek() {
                    None => self.err(ParseErrorKind::UnexpectedEnd),
                    Some(_) => self.err(ParseErrorKind::Expected("')'")),
                });
            }
            if args.len() != 1 {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Arity {
                        func: func.name(),
                        got: args.len(),
                    },
                });
            }
            return Ok(Expr::Call(
                func,
                Box::new(args.pop().expect("one argument")),
            ));
        }
        match name {
            "t" => Ok(Expr::Var(Var::T)),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            _ => match name.strip_prefix('x').map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 && !name[1..].starts_with('0') => {
                    Ok(Expr::Var(Var::X(k - 1)))
                }
                _ => Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
                }),
            },
        }
    }
}

/// Parses an expression; the whole input must be consumed.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let e = p.sum()?;
    if p.peek().is_some() {
        return Err(p.unexpected());
    }
    Ok(e)
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        parse(source)
    }

    /// Evaluates at spatial point `x` and time `t`; every intermediate must be finite.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X(k)) => *x
                .get(*k)
                .ok_or(EvalError::UnboundVariable(k + 1, x.len()))?,
            Expr::Neg(e) => -e.eval(x, t)?,
            Expr::Call(f, e) => {
                let a = e.eval(x, t)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt if a < 0.0 => return Err(EvalError::Domain(a)),
                    Func::Sqrt => a.sqrt(),
                }
            }
            Expr::Bin(op, l, r) => {
                let a = l.eval(x, t)?;
                let b = r.eval(x, t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(base, n) => {
                let a = base.eval(x, t)?;
                if a == 0.0 && *n < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.powi(*n)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// True when `t` appears anywhere.
    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == Var::T,
            Expr::Neg(e) | Expr::Call(_, e) | Expr::Pow(e, _) => e.depends_on_time(),
            Expr::Bin(_, l, r) => l.depends_on_time() || r.depends_on_time(),
        }
    }

    /// Number of spatial coordinates referenced (largest one-based index, 0 if none).
    pub fn spatial_arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(Var::T) => 0,
            Expr::Var(Var::X(k)) => k + 1,
            Expr::Neg(e) | Expr::Call(_, e) | Expr::Pow(e, _) => e.spatial_arity(),
            Expr::Bin(_, l, r) => l.spatial_arity().max(r.spatial_arity()),
        }
    }

    /// Constant value when no variable occurs and evaluation succeeds.
    pub fn constant_value(&self) -> Option<f64> {
        if self.spatial_arity() == 0 && !self.depends_on_time() {
            self.eval(&[], 0.0).ok()
        } else {
            None
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the minimal parentheses needed for `parse` to rebuild the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::X(k)) => write!(f, "x{}", k + 1),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                write_child(f, l, l.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, r, r.precedence() <= p)
            }
            Expr::Pow(base, n) => {
                write_child(f, base, base.precedence() < 5)?;
                write!(f, "^{n}")
            }
        }
    }
}
