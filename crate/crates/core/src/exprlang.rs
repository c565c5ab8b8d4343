//! A small expression language in one complex variable `s`.
//!
//! Grammar (standard precedence, `^` binds tightest and is right associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 's' | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Evaluation uses principal branches for `log`, `sqrt` and non-integer powers.
//! Integer powers go through repeated multiplication, so they have no cut.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

type C = Complex64;

/// Divisors smaller than this in modulus are treated as poles.
pub const POLE_TOL: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 9] =
        [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Tan, Func::Sinh, Func::Cosh, Func::Tanh, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Expression tree. Constants are real: the grammar has no imaginary literal
/// because field components are real on the real axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("non-ASCII byte at offset {offset}")]
    NonAscii { offset: usize },
    #[error("syntax error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<&'static str>, found: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("numeric literal at byte {offset} is not finite")]
    NonFinite { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("pole at s = {0}")]
    Pole(C),
    #[error("log of zero at s = {0}")]
    Domain(C),
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    if let Some(offset) = bytes.iter().position(|b| !b.is_ascii()) {
        return Err(ParseError::NonAscii { offset });
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let mantissa = &src[i..j];
                if mantissa == "." {
                    return Err(ParseError::Syntax { offset: i, expected: vec!["digit"], found: "'.'".into() });
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    let digits = k;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k == digits {
                        return Err(ParseError::Syntax {
                            offset: k,
                            expected: vec!["exponent digit"],
                            found: describe_byte(bytes.get(k)),
                        });
                    }
                    j = k;
                }
                let v: f64 = src[i..j].parse().map_err(|_| ParseError::Syntax {
                    offset: i,
                    expected: vec!["number"],
                    found: src[i..j].to_string(),
                })?;
                if !v.is_finite() {
                    return Err(ParseError::NonFinite { offset: i });
                }
                i = j;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((start, Tok::Ident(src[i..j].to_string())));
                i = j;
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: i,
                    expected: vec!["number", "s", "function", "'('", "operator"],
                    found: describe_byte(Some(&c)),
                })
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

fn describe_byte(b: Option<&u8>) -> String {
    match b {
        Some(b) => format!("'{}'", *b as char),
        None => "end of input".into(),
    }
}

// ---------------------------------------------------------------- parsing

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

// Guards the recursive descent against stack exhaustion on hostile input.
const MAX_DEPTH: usize = 256;

const PRIMARY_START: &[&str] = &["number", "s", "function", "'('", "'-'"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax { offset: self.offset(), expected: expected.to_vec(), found: self.peek().describe() }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::Syntax {
                offset: self.offset(),
                expected: vec!["shallower nesting"],
                found: "nesting too deep".into(),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
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
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if *self.peek() == Tok::Minus {
            self.bump();
            Expr::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "s" {
                    return Ok(Expr::Var);
                }
                let Some(f) = Func::from_name(&name) else {
                    return Err(ParseError::UnknownIdent { offset, name });
                };
                if *self.peek() != Tok::LParen {
                    return Err(self.err(&["'('"]));
                }
                self.bump();
                let arg = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.err(&["')'", "operator"]));
                }
                self.bump();
                Ok(Expr::Call(f, Box::new(arg)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.err(&["')'", "operator"]));
                }
                self.bump();
                Ok(e)
            }
            _ => Err(self.err(PRIMARY_START)),
        }
    }
}

/// Parse an expression in `s`.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err(&["operator", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------- printing

// Binding strength used by the printer; higher binds tighter.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
        Expr::Const(_) | Expr::Var | Expr::Call(..) => 5,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Expr::Var => write!(f, "s"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_at(f, a, 3)
        }
        Expr::Add(a, b) => {
            write_at(f, a, 1)?;
            write!(f, " + ")?;
            write_at(f, b, 2)
        }
        Expr::Sub(a, b) => {
            write_at(f, a, 1)?;
            write!(f, " - ")?;
            write_at(f, b, 2)
        }
        Expr::Mul(a, b) => {
            write_at(f, a, 2)?;
            write!(f, "*")?;
            write_at(f, b, 3)
        }
        Expr::Div(a, b) => {
            write_at(f, a, 2)?;
            write!(f, "/")?;
            write_at(f, b, 3)
        }
        Expr::Pow(a, b) => {
            write_at(f, a, 5)?;
            write!(f, "^")?;
            write_at(f, b, 3)
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

// ---------------------------------------------------------------- evaluation

fn as_integer(v: C) -> Option<i32> {
    if v.im == 0.0 && v.re.fract() == 0.0 && v.re.abs() <= i32::MAX as f64 {
        Some(v.re as i32)
    } else {
        None
    }
}

fn ipow(base: C, n: i32, s: C) -> Result<C, EvalError> {
    if n >= 0 {
        Ok(base.powi(n))
    } else {
        if base.norm() < POLE_TOL {
            return Err(EvalError::Pole(s));
        }
        Ok(base.inv().powi(-n))
    }
}

impl Expr {
    /// Evaluate at `s`.
    pub fn eval(&self, s: C) -> Result<C, EvalError> {
        Ok(match self {
            Expr::Const(c) => C::new(*c, 0.0),
            Expr::Var => s,
            Expr::Neg(a) => -a.eval(s)?,
            Expr::Add(a, b) => a.eval(s)? + b.eval(s)?,
            Expr::Sub(a, b) => a.eval(s)? - b.eval(s)?,
            Expr::Mul(a, b) => a.eval(s)? * b.eval(s)?,
            Expr::Div(a, b) => {
                let d = b.eval(s)?;
                if d.norm() < POLE_TOL {
                    return Err(EvalError::Pole(s));
                }
                a.eval(s)? / d
            }
            Expr::Pow(a, b) => {
                let base = a.eval(s)?;
                let e = b.eval(s)?;
                if let Some(n) = as_integer(e) {
                    ipow(base, n, s)?
                } else if base == C::new(0.0, 0.0) {
                    if e.re > 0.0 {
                        C::new(0.0, 0.0)
                    } else {
                        return Err(EvalError::Pole(s));
                    }
                } else {
                    (e * base.ln()).exp()
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(s)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x == C::new(0.0, 0.0) {
                            return Err(EvalError::Domain(s));
                        }
                        x.ln()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => {
                        let c = x.cos();
                        if c.norm() < POLE_TOL {
                            return Err(EvalError::Pole(s));
                        }
                        x.sin() / c
                    }
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Tanh => {
                        let c = x.cosh();
                        if c.norm() < POLE_TOL {
                            return Err(EvalError::Pole(s));
                        }
                        x.sinh() / c
                    }
                    Func::Sqrt => x.sqrt(),
                }
            }
        })
    }

    /// Whether the tree depends on `s` at all.
    pub fn has_var(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.has_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.has_var() || b.has_var()
            }
        }
    }

    /// Value of an `s`-free subtree.
    pub fn const_value(&self) -> Option<C> {
        if self.has_var() {
            None
        } else {
            self.eval(C::new(0.0, 0.0)).ok()
        }
    }

    /// True when the expression contains a cut: `log`, `sqrt`, or `^` with
    /// an exponent that is not a constant integer.
    pub fn is_branch_sensitive(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var => false,
            Expr::Neg(a) => a.is_branch_sensitive(),
            Expr::Call(f, a) => matches!(f, Func::Log | Func::Sqrt) || a.is_branch_sensitive(),
            Expr::Pow(a, b) => {
                let integer_exp = b.const_value().and_then(as_integer).is_some();
                !integer_exp || a.is_branch_sensitive()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_branch_sensitive() || b.is_branch_sensitive()
            }
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }

    /// Symbolic derivative with respect to `s`.
    pub fn derivative(&self) -> Expr {
        differentiate(self)
    }
}

// ---------------------------------------------------------------- differentiation
//
// The smart constructors fold the trivial cases (0 and 1 operands) so that
// repeated differentiation stays manageable. They never introduce negative
// constants: negation is kept as an explicit node.

fn c(v: f64) -> Expr {
    if v < 0.0 {
        Expr::Neg(Box::new(Expr::Const(-v)))
    } else {
        Expr::Const(v)
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(x) if *x == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) if x == 0.0 => Expr::Const(0.0),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        return b;
    }
    if is_const(&b, 0.0) {
        return a;
    }
    if let Expr::Neg(nb) = b {
        return sub(a, *nb);
    }
    Expr::Add(Box::new(a), Box::new(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 0.0) {
        return a;
    }
    if is_const(&a, 0.0) {
        return neg(b);
    }
    if let Expr::Neg(nb) = b {
        return add(a, *nb);
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        return Expr::Const(0.0);
    }
    if is_const(&a, 1.0) {
        return b;
    }
    if is_const(&b, 1.0) {
        return a;
    }
    match (a, b) {
        (Expr::Neg(x), Expr::Neg(y)) => mul(*x, *y),
        (Expr::Neg(x), y) => neg(mul(*x, y)),
        (x, Expr::Neg(y)) => neg(mul(x, *y)),
        (Expr::Const(x), Expr::Const(y)) => c(x * y),
        (x, y) => Expr::Mul(Box::new(x), Box::new(y)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        return Expr::Const(0.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    match (a, b) {
        (Expr::Neg(x), y) => neg(div(*x, y)),
        (x, Expr::Neg(y)) => neg(div(x, *y)),
        (x, y) => Expr::Div(Box::new(x), Box::new(y)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 1.0) {
        return a;
    }
    if is_const(&b, 0.0) {
        return Expr::Const(1.0);
    }
    Expr::Pow(Box::new(a), Box::new(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

/// d e / d s.
pub fn differentiate(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var => Expr::Const(1.0),
        Expr::Neg(a) => neg(differentiate(a)),
        Expr::Add(a, b) => add(differentiate(a), differentiate(b)),
        Expr::Sub(a, b) => sub(differentiate(a), differentiate(b)),
        Expr::Mul(a, b) => add(mul(differentiate(a), (**b).clone()), mul((**a).clone(), differentiate(b))),
        Expr::Div(a, b) => {
            let da = differentiate(a);
            let db = differentiate(b);
            if is_const(&db, 0.0) {
                div(da, (**b).clone())
            } else {
                div(sub(mul(da, (**b).clone()), mul((**a).clone(), db)), pow((**b).clone(), Expr::Const(2.0)))
            }
        }
        Expr::Pow(a, b) => {
            let da = differentiate(a);
            if let Some(k) = b.const_value().filter(|v| v.im == 0.0) {
                // k * a^(k-1) * a'
                let k = k.re;
                let lowered = if let Some(n) = as_integer(C::new(k, 0.0)) {
                    c((n - 1) as f64)
                } else {
                    sub((**b).clone(), Expr::Const(1.0))
                };
                mul(mul(c(k), pow((**a).clone(), lowered)), da)
            } else {
                // a^b * (b' log a + b a'/a)
                let db = differentiate(b);
                let term1 = mul(db, call(Func::Log, (**a).clone()));
                let term2 = div(mul((**b).clone(), da), (**a).clone());
                mul(e.clone(), add(term1, term2))
            }
        }
        Expr::Call(f, a) => {
            let da = differentiate(a);
            let a = (**a).clone();
            let outer = match f {
                Func::Exp => call(Func::Exp, a),
                Func::Log => div(Expr::Const(1.0), a),
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Tan => div(Expr::Const(1.0), pow(call(Func::Cos, a), Expr::Const(2.0))),
                Func::Sinh => call(Func::Cosh, a),
                Func::Cosh => call(Func::Sinh, a),
                Func::Tanh => sub(Expr::Const(1.0), pow(call(Func::Tanh, a), Expr::Const(2.0))),
                Func::Sqrt => div(Expr::Const(1.0), mul(Expr::Const(2.0), call(Func::Sqrt, a))),
            };
            mul(outer, da)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cx(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn parses_grammar_forced_shapes() {
        let e = parse("1/(1+s^2)^(3/2)").unwrap();
        let expected = Expr::Div(
            b(Expr::Const(1.0)),
            b(Expr::Pow(
                b(Expr::Add(b(Expr::Const(1.0)), b(Expr::Pow(b(Expr::Var), b(Expr::Const(2.0)))))),
                b(Expr::Div(b(Expr::Const(3.0)), b(Expr::Const(2.0)))),
            )),
        );
        assert_eq!(e, expected);
        assert_eq!(parse("s").unwrap(), Expr::Var);
        assert_eq!(
            parse("2*s + exp(-s)").unwrap(),
            Expr::Add(
                b(Expr::Mul(b(Expr::Const(2.0)), b(Expr::Var))),
                b(Expr::Call(Func::Exp, b(Expr::Neg(b(Expr::Var))))),
            )
        );
    }

    #[test]
    fn precedence_and_associativity() {
        // unary minus binds looser than ^
        assert_eq!(parse("-s^2").unwrap(), Expr::Neg(b(Expr::Pow(b(Expr::Var), b(Expr::Const(2.0))))));
        // ^ is right associative
        assert_eq!(
            parse("s^2^3").unwrap(),
            Expr::Pow(b(Expr::Var), b(Expr::Pow(b(Expr::Const(2.0)), b(Expr::Const(3.0)))))
        );
        // - and / are left associative
        let v = parse("8/2/2").unwrap().eval(cx(0.0, 0.0)).unwrap();
        assert_eq!(v, cx(2.0, 0.0));
        let v = parse("1-2-3").unwrap().eval(cx(0.0, 0.0)).unwrap();
        assert_eq!(v, cx(-4.0, 0.0));
    }

    #[test]
    fn reports_syntax_errors_with_offsets() {
        match parse("2s") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1 + (s") {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 6);
                assert!(expected.contains(&"')'"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse("foo(s)"), Err(ParseError::UnknownIdent { offset: 0, name: "foo".into() }));
        assert_eq!(parse("   "), Err(ParseError::Empty));
        assert!(matches!(parse("1e"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("1e999"), Err(ParseError::NonFinite { .. })));
        assert!(matches!(parse("sqrt s"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("i"), Err(ParseError::UnknownIdent { .. })));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = "(".repeat(10_000) + "s" + &")".repeat(10_000);
        assert!(parse(&src).is_err());
        let src = "-".repeat(10_000) + "s";
        assert!(parse(&src).is_err());
    }

    #[test]
    fn evaluates_reference_points() {
        let e = parse("1/(1+s^2)^(3/2)").unwrap();
        assert!((e.eval(cx(0.0, 0.0)).unwrap() - cx(1.0, 0.0)).norm() < 1e-15);
        let v = e.eval(cx(0.0, 0.5)).unwrap();
        assert!((v - cx(0.75f64.powf(-1.5), 0.0)).norm() < 1e-12);
        assert!((v.re - 1.539601).abs() < 1e-6);
        let v = parse("s^2").unwrap().eval(cx(1.0, 1.0)).unwrap();
        assert_eq!(v, cx(0.0, 2.0));
    }

    #[test]
    fn evaluation_errors() {
        let e = parse("1/s").unwrap();
        assert!(matches!(e.eval(cx(0.0, 0.0)), Err(EvalError::Pole(_))));
        let e = parse("log(s)").unwrap();
        assert!(matches!(e.eval(cx(0.0, 0.0)), Err(EvalError::Domain(_))));
        let e = parse("s^-2").unwrap();
        assert!(matches!(e.eval(cx(0.0, 0.0)), Err(EvalError::Pole(_))));
        assert_eq!(parse("s^0.5").unwrap().eval(cx(0.0, 0.0)).unwrap(), cx(0.0, 0.0));
    }

    #[test]
    fn integer_powers_have_no_cut() {
        // (-1 + tiny i)^3 and (-1 - tiny i)^3 agree; a principal-log power would too,
        // but negative base with integer exponent must stay exactly real
        let e = parse("s^3").unwrap();
        assert_eq!(e.eval(cx(-2.0, 0.0)).unwrap(), cx(-8.0, 0.0));
        let e = parse("s^(3/2)").unwrap();
        let above = e.eval(cx(-1.0, 1e-14)).unwrap();
        let below = e.eval(cx(-1.0, -1e-14)).unwrap();
        assert!((above - below).norm() > 1.0);
    }

    #[test]
    fn branch_sensitivity_flags() {
        assert!(!parse("s^2 + 1/s").unwrap().is_branch_sensitive());
        assert!(parse("(1+s^2)^(3/2)").unwrap().is_branch_sensitive());
        assert!(parse("sqrt(s)").unwrap().is_branch_sensitive());
        assert!(parse("log(s)").unwrap().is_branch_sensitive());
        assert!(!parse("exp(s)^(4/2)").unwrap().is_branch_sensitive());
    }

    #[test]
    fn derivative_reference_values() {
        let d = parse("s^2").unwrap().derivative();
        for z in [cx(0.3, 0.1), cx(-2.0, 1.5)] {
            assert!((d.eval(z).unwrap() - 2.0 * z).norm() < 1e-14);
        }
        let d = parse("exp(-s)").unwrap().derivative();
        for z in [cx(0.3, 0.1), cx(-2.0, 1.5)] {
            assert!((d.eval(z).unwrap() + (-z).exp()).norm() < 1e-13);
        }
        let d = parse("1/(1+s^2)^(3/2)").unwrap().derivative();
        let v = d.eval(cx(0.3, 0.0)).unwrap();
        let exact = -3.0 * 0.3 * (1.0f64 + 0.09).powf(-2.5);
        assert!((v.re - exact).abs() < 1e-13);
        // central differences at step 1e-5 give -0.7255649
        assert!((v.re + 0.7255649).abs() < 1e-6);
    }

    #[test]
    fn derivative_of_every_function_matches_finite_differences() {
        let srcs = [
            "exp(s)",
            "log(s)",
            "sin(s)",
            "cos(s)",
            "tan(s)",
            "sinh(s)",
            "cosh(s)",
            "tanh(s)",
            "sqrt(s)",
            "s^s",
            "2^s",
            "s^(1/3)",
            "(s+1)/(s-2)",
            "-s*s",
        ];
        let z = cx(0.7, 0.4);
        for src in srcs {
            let e = parse(src).unwrap();
            let d = e.derivative().eval(z).unwrap();
            let h = 1e-5;
            let fd = (e.eval(z + h).unwrap() - e.eval(z - h).unwrap()) / (2.0 * h);
            assert!((d - fd).norm() <= 1e-6 * d.norm().max(1.0), "{src}: {d} vs {fd}");
        }
    }

    #[test]
    fn printing_is_readable() {
        assert_eq!(parse("1/(1+s^2)^(3/2)").unwrap().to_string(), "1/(1 + s^2)^(3/2)");
        assert_eq!(parse("-(s+1)").unwrap().to_string(), "-(s + 1)");
        assert_eq!(parse("(s^2)^3").unwrap().to_string(), "(s^2)^3");
        assert_eq!(parse("s^-2").unwrap().to_string(), "s^-2");
        assert_eq!(parse("1-(2-3)").unwrap().to_string(), "1 - (2 - 3)");
    }

    // ------------------------------------------------------------ properties

    fn arb_const() -> impl Strategy<Value = Expr> {
        prop_oneof![
            (0u32..20).prop_map(|n| Expr::Const(n as f64)),
            (0.0f64..1e6).prop_map(Expr::Const),
            (1e-12f64..1.0).prop_map(Expr::Const),
        ]
    }

    fn arb_func() -> impl Strategy<Value = Func> {
        proptest::sample::select(Func::ALL.to_vec())
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![arb_const(), Just(Expr::Var)];
        // recursion depth 7 on top of the leaf level gives trees of depth <= 8
        leaf.prop_recursive(7, 64, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Pow(Box::new(a), Box::new(b))),
                (arb_func(), inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    // Smooth expressions for derivative checks: entire functions plus
    // denominators bounded away from zero near the sample region.
    fn arb_smooth() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(0u32..5).prop_map(|n| Expr::Const(n as f64 * 0.5)), Just(Expr::Var)];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 0u32..4).prop_map(|(a, n)| { Expr::Pow(Box::new(a), Box::new(Expr::Const(n as f64))) }),
                inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
                inner
                    .clone()
                    .prop_map(|a| Expr::Call(Func::Exp, Box::new(Expr::Mul(Box::new(Expr::Const(0.25)), Box::new(a))))),
                // 1/(2 + a^2) stays away from its poles for small real-ish a
                inner.prop_map(|a| Expr::Div(
                    Box::new(Expr::Const(1.0)),
                    Box::new(Expr::Add(
                        Box::new(Expr::Const(2.0)),
                        Box::new(Expr::Pow(Box::new(a), Box::new(Expr::Const(2.0))))
                    ))
                )),
            ]
        })
    }

    fn depth(e: &Expr) -> usize {
        match e {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + depth(a),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + depth(a).max(depth(b))
            }
        }
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            prop_assert!(depth(&e) <= 8);
            let printed = e.to_string();
            let back = parse(&printed).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn derivative_matches_central_differences(
            e in arb_smooth(),
            pts in proptest::collection::vec((-0.6f64..0.6, -0.3f64..0.3), 100),
        ) {
            let d = e.derivative();
            let h = 1e-5;
            for (x, y) in pts {
                let z = cx(x, y);
                let (Ok(fp), Ok(fm), Ok(dv)) = (e.eval(z + h), e.eval(z - h), d.eval(z)) else {
                    continue;
                };
                let fd = (fp - fm) / (2.0 * h);
                // h^2 truncation error scales with the size of the function itself
                let scale = dv.norm().max(fp.norm()).max(1.0);
                prop_assert!((dv - fd).norm() <= 1e-6 * scale, "{} at {}: {} vs {}", e, z, dv, fd);
            }
        }

        #[test]
        fn evaluation_is_deterministic(e in arb_expr(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let z = cx(x, y);
            let a = e.eval(z);
            let b = e.eval(z);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }
}
