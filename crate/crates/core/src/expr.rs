//! Scalar expression language used to declare vector fields, Lyapunov
//! functions and gains.
//!
//! Grammar (highest precedence first): `^` with a constant exponent, unary
//! `-`, `*` and `/`, `+` and `-`. Binary operators are left-associative.
//! Function calls use `name(arg)` with `sin`, `cos`, `exp`, `ln`, `abs`,
//! `sqrt` and `sign`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
    Sqrt,
    /// Derivative of `abs`; zero at the origin.
    Sign,
}

impl UnaryOp {
    fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Ln => Some("ln"),
            UnaryOp::Abs => Some("abs"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Sign => Some("sign"),
        }
    }

    fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "ln" => UnaryOp::Ln,
            "abs" => UnaryOp::Abs,
            "sqrt" => UnaryOp::Sqrt,
            "sign" => UnaryOp::Sign,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, DomainError> {
        let y = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Ln => {
                if x <= 0.0 {
                    return Err(DomainError::LogNonPositive);
                }
                x.ln()
            }
            UnaryOp::Abs => x.abs(),
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    return Err(DomainError::SqrtNegative);
                }
                x.sqrt()
            }
            UnaryOp::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        finite(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, DomainError> {
        let y = match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                a / b
            }
        };
        finite(y)
    }
}

fn apply_pow(base: f64, exponent: f64) -> Result<f64, DomainError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(DomainError::NegativeBase);
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(DomainError::DivisionByZero);
    }
    finite(base.powf(exponent))
}

fn finite(y: f64) -> Result<f64, DomainError> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(DomainError::NonFinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive number")]
    LogNonPositive,
    #[error("square root of a negative number")]
    SqrtNegative,
    #[error("non-integer power of a negative number")]
    NegativeBase,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at position {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("no binding for variable `{0}`")]
    MissingBinding(String),
    #[error("domain error: {0}")]
    Domain(#[from] DomainError),
}

/// Source of variable values for [`Expr::evaluate`].
pub trait Bindings {
    fn value(&self, name: &str) -> Option<f64>;
}

impl Bindings for HashMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for HashMap<&str, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for [(&str, f64)] {
    fn value(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Bindings for [(&str, f64); N] {
    fn value(&self, name: &str) -> Option<f64> {
        self.as_slice().value(name)
    }
}

/// Expression tree. Immutable once built; cheap to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Power with a constant real exponent.
    Pow(Box<Expr>, f64),
}

impl Expr {
    /// Parses `text`, rejecting any identifier not in `allowed_vars`.
    pub fn parse(text: &str, allowed_vars: &[&str]) -> Result<Expr, ExprError> {
        parse_expression(text, allowed_vars)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// Names of the free variables.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_variables(out),
            Expr::Binary(_, a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn evaluate<B: Bindings + ?Sized>(&self, bindings: &B) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(n) => bindings
                .value(n)
                .ok_or_else(|| ExprError::MissingBinding(n.clone()))?,
            Expr::Unary(op, a) => op.apply(a.evaluate(bindings)?)?,
            Expr::Binary(op, a, b) => op.apply(a.evaluate(bindings)?, b.evaluate(bindings)?)?,
            Expr::Pow(a, p) => apply_pow(a.evaluate(bindings)?, *p)?,
        })
    }

    /// Symbolic partial derivative with light constant folding.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(n) => Expr::Const(if n == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, u) => {
                let du = u.differentiate(var);
                if du.is_zero() {
                    return Expr::Const(0.0);
                }
                let u = (**u).clone();
                let outer = match op {
                    UnaryOp::Neg => return neg(du),
                    UnaryOp::Sin => unary(UnaryOp::Cos, u),
                    UnaryOp::Cos => neg(unary(UnaryOp::Sin, u)),
                    UnaryOp::Exp => unary(UnaryOp::Exp, u),
                    UnaryOp::Ln => return div(du, u),
                    UnaryOp::Abs => unary(UnaryOp::Sign, u),
                    UnaryOp::Sqrt => {
                        return div(du, mul(Expr::Const(2.0), unary(UnaryOp::Sqrt, u)))
                    }
                    UnaryOp::Sign => return Expr::Const(0.0),
                };
                mul(outer, du)
            }
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                match op {
                    BinaryOp::Add => add(da, db),
                    BinaryOp::Sub => sub(da, db),
                    BinaryOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    BinaryOp::Div => {
                        if db.is_zero() {
                            return div(da, (**b).clone());
                        }
                        div(
                            sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                            pow((**b).clone(), 2.0),
                        )
                    }
                }
            }
            Expr::Pow(u, p) => {
                let du = u.differentiate(var);
                if du.is_zero() || *p == 0.0 {
                    return Expr::Const(0.0);
                }
                mul(mul(Expr::Const(*p), pow((**u).clone(), p - 1.0)), du)
            }
        }
    }

    /// Resolves variable names to slots in `order` for repeated evaluation.
    pub fn compile(&self, order: &[&str]) -> Result<CompiledExpr, ExprError> {
        Ok(CompiledExpr {
            root: self.lower(order)?,
        })
    }

    fn lower(&self, order: &[&str]) -> Result<Node, ExprError> {
        Ok(match self {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(n) => Node::Slot(
                order
                    .iter()
                    .position(|o| o == n)
                    .ok_or_else(|| ExprError::MissingBinding(n.clone()))?,
            ),
            Expr::Unary(op, a) => Node::Unary(*op, Box::new(a.lower(order)?)),
            Expr::Binary(op, a, b) => {
                Node::Binary(*op, Box::new(a.lower(order)?), Box::new(b.lower(order)?))
            }
            Expr::Pow(a, p) => Node::Pow(Box::new(a.lower(order)?), *p),
        })
    }
}

fn unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Const(c) = a {
        if let Ok(v) = op.apply(c) {
            return Expr::Const(v);
        }
    }
    Expr::Unary(op, Box::new(a))
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        other => unary(UnaryOp::Neg, other),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(x), _) | (_, Expr::Const(x)) if x == 0.0 => Expr::Const(0.0),
        (Expr::Const(x), e) | (e, Expr::Const(x)) if x == 1.0 => e,
        (Expr::Const(x), e) | (e, Expr::Const(x)) if x == -1.0 => neg(e),
        (Expr::Const(x), Expr::Binary(BinaryOp::Mul, l, r))
        | (Expr::Binary(BinaryOp::Mul, l, r), Expr::Const(x))
            if matches!(*l, Expr::Const(_)) =>
        {
            let Expr::Const(y) = *l else { unreachable!() };
            mul(Expr::Const(x * y), *r)
        }
        (e, Expr::Const(x)) => Expr::Binary(BinaryOp::Mul, Box::new(Expr::Const(x)), Box::new(e)),
        (a, b) => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => Expr::Const(x / y),
        _ if a.is_zero() => Expr::Const(0.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    if p == 1.0 {
        return a;
    }
    if p == 0.0 {
        return Expr::Const(1.0);
    }
    if let Expr::Const(c) = a {
        if let Ok(v) = apply_pow(c, p) {
            return Expr::Const(v);
        }
    }
    Expr::Pow(Box::new(a), p)
}

/// Fully parenthesised; parses back to an evaluation-equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(n) => f.write_str(n),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.function_name().unwrap_or("?")),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, p) => write!(f, "({a})^({p:?})"),
        }
    }
}

/// Expression with variables resolved to positional slots.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
}

impl CompiledExpr {
    pub fn eval(&self, slots: &[f64]) -> Result<f64, DomainError> {
        self.root.eval(slots)
    }
}

impl Node {
    fn eval(&self, slots: &[f64]) -> Result<f64, DomainError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Slot(i) => Ok(slots[*i]),
            Node::Unary(op, a) => op.apply(a.eval(slots)?),
            Node::Binary(op, a, b) => op.apply(a.eval(slots)?, b.eval(slots)?),
            Node::Pow(a, p) => apply_pow(a.eval(slots)?, *p),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
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
                let lit = &text[start..i];
                let value = lit.parse::<f64>().map_err(|_| ExprError::Syntax {
                    position: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ExprError::Syntax {
                    position: i,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    allowed: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ExprError {
        let message = match self.peek() {
            Tok::End => "unexpected end of input".to_string(),
            t => format!("unexpected token {t:?}"),
        };
        ExprError::Syntax {
            position: self.offset(),
            message,
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.product()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.signed()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.signed()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn signed(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.signed()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.signed()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.primary()?;
        while let Tok::Op('^') = self.peek() {
            self.bump();
            let at = self.offset();
            let exponent = match self.peek() {
                Tok::Op('-') => {
                    self.bump();
                    Expr::Unary(UnaryOp::Neg, Box::new(self.primary()?))
                }
                _ => self.primary()?,
            };
            let value = exponent
                .evaluate(&[] as &[(&str, f64)])
                .map_err(|_| ExprError::Syntax {
                    position: at,
                    message: "exponent must be a finite constant".to_string(),
                })?;
            base = Expr::Pow(Box::new(base), value);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, at) = self.bump();
                if *self.peek() == Tok::LParen {
                    let op = UnaryOp::from_function_name(&name).ok_or_else(|| ExprError::Syntax {
                        position: at,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Unary(op, Box::new(arg)));
                }
                if !self.allowed.contains(&name.as_str()) {
                    return Err(ExprError::UnknownVariable { name, position: at });
                }
                Ok(Expr::Var(name))
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

/// Parses `text` over the declared variable set `allowed_vars`.
pub fn parse_expression(text: &str, allowed_vars: &[&str]) -> Result<Expr, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            position: 0,
            message: "empty expression".to_string(),
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        allowed: allowed_vars,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

/// `x1..xd`, `v1..vm`: the variable names a vector field may use.
pub fn state_input_vars(state_dim: usize, input_dim: usize) -> Vec<String> {
    (1..=state_dim)
        .map(|i| format!("x{i}"))
        .chain((1..=input_dim).map(|i| format!("v{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const XV: &[&str] = &["x1", "x2", "v1"];

    fn at(e: &Expr, x1: f64, x2: f64) -> f64 {
        e.evaluate(&[("x1", x1), ("x2", x2), ("v1", 0.0)]).unwrap()
    }

    #[test]
    fn parses_vector_field_component() {
        let e = parse_expression("x1 + sin(x1 - x2)", XV).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Add,
            Box::new(Expr::var("x1")),
            Box::new(Expr::Unary(
                UnaryOp::Sin,
                Box::new(Expr::Binary(
                    BinaryOp::Sub,
                    Box::new(Expr::var("x1")),
                    Box::new(Expr::var("x2")),
                )),
            )),
        );
        assert_eq!(e, expected);
        assert_eq!(at(&e, 0.0, 0.0), 0.0);
    }

    #[test]
    fn parses_quadratic_lyapunov() {
        let v = parse_expression("0.5*(x1^2 + 1.25*x2^2)", XV).unwrap();
        assert_eq!(at(&v, 1.0, 0.0), 0.5);
        assert_eq!(at(&v, 0.0, 2.0), 2.5);
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_expression("sin(", XV) {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(
            parse_expression("x1 +", XV),
            Err(ExprError::Syntax { position: 4, .. })
        ));
        assert!(matches!(
            parse_expression("x1 ) ", XV),
            Err(ExprError::Syntax { position: 3, .. })
        ));
        assert!(matches!(parse_expression("  ", XV), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expression("foo(x1)", XV), Err(ExprError::Syntax { position: 0, .. })));
        assert!(matches!(parse_expression("x1 # 2", XV), Err(ExprError::Syntax { position: 3, .. })));
    }

    #[test]
    fn unknown_variable_is_named() {
        match parse_expression("x1 + x3", XV) {
            Err(ExprError::UnknownVariable { name, position }) => {
                assert_eq!(name, "x3");
                assert_eq!(position, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exponent_must_be_constant() {
        assert!(matches!(parse_expression("x1^x2", XV), Err(ExprError::Syntax { position: 3, .. })));
        let e = parse_expression("x1^(3/2)", XV).unwrap();
        assert_eq!(e, Expr::Pow(Box::new(Expr::var("x1")), 1.5));
        let e = parse_expression("x1^-1", XV).unwrap();
        assert_eq!(at(&e, 4.0, 0.0), 0.25);
    }

    #[test]
    fn precedence_and_associativity() {
        let vars: &[&str] = &["x1"];
        let e = parse_expression("-x1^2", vars).unwrap();
        assert_eq!(e.evaluate(&[("x1", 3.0)]).unwrap(), -9.0);
        let e = parse_expression("8/2/2", vars).unwrap();
        assert_eq!(e.evaluate(&[("x1", 0.0)]).unwrap(), 2.0);
        let e = parse_expression("1 - 2 - 3", vars).unwrap();
        assert_eq!(e.evaluate(&[("x1", 0.0)]).unwrap(), -4.0);
        let e = parse_expression("2*3^2", vars).unwrap();
        assert_eq!(e.evaluate(&[("x1", 0.0)]).unwrap(), 18.0);
        let e = parse_expression("1.5e2 + .5 + 2E-1", vars).unwrap();
        assert_eq!(e.evaluate(&[("x1", 0.0)]).unwrap(), 150.7);
    }

    #[test]
    fn evaluation_errors() {
        let e = parse_expression("x1/x2", XV).unwrap();
        assert_eq!(
            e.evaluate(&[("x1", 1.0), ("x2", 0.0)]),
            Err(ExprError::Domain(DomainError::DivisionByZero))
        );
        assert_eq!(
            e.evaluate(&[("x1", 1.0)]),
            Err(ExprError::MissingBinding("x2".into()))
        );
        let e = parse_expression("ln(x1)", XV).unwrap();
        assert_eq!(
            e.evaluate(&[("x1", 0.0)]),
            Err(ExprError::Domain(DomainError::LogNonPositive))
        );
        let e = parse_expression("sqrt(x1)", XV).unwrap();
        assert_eq!(
            e.evaluate(&[("x1", -1.0)]),
            Err(ExprError::Domain(DomainError::SqrtNegative))
        );
        let e = parse_expression("x1^0.5", XV).unwrap();
        assert_eq!(
            e.evaluate(&[("x1", -1.0)]),
            Err(ExprError::Domain(DomainError::NegativeBase))
        );
    }

    #[test]
    fn derivative_of_quadratic_is_linear() {
        let v = parse_expression("0.5*(x1^2 + 1.25*x2^2)", XV).unwrap();
        let d1 = v.differentiate("x1");
        assert_eq!(d1, Expr::var("x1"));
        let d2 = v.differentiate("x2");
        assert!((at(&d2, 0.3, -0.7) - 1.25 * -0.7).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sine_difference() {
        let e = parse_expression("sin(x1 - x2)", XV).unwrap();
        let d = e.differentiate("x2");
        for &(a, b) in &[(0.0, 0.0), (1.0, 0.2), (-3.0, 2.5)] {
            assert!((at(&d, a, b) + (a - b).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_in_absent_variable_is_zero() {
        let e = parse_expression("x1 + sin(x1 - x2)", XV).unwrap();
        assert_eq!(e.differentiate("v1"), Expr::Const(0.0));
    }

    #[test]
    fn display_round_trip_examples() {
        for text in [
            "x1 + sin(x1 - x2)",
            "-x1^2 + (-3.5)*x2",
            "0.5*(x1^2 + 1.25*x2^2)",
            "abs(x1)^1.5 / (1 + exp(-x2))",
            "1e-300 * x1 - 2.5e10",
        ] {
            let e = parse_expression(text, XV).unwrap();
            let printed = e.to_string();
            let again = parse_expression(&printed, XV).unwrap();
            assert_eq!(e, again, "{text} -> {printed}");
        }
    }

    #[test]
    fn compiled_matches_tree() {
        let e = parse_expression("x2 * cos(x1) - v1^2", XV).unwrap();
        let c = e.compile(&["v1", "x1", "x2"]).unwrap();
        let direct = e.evaluate(&[("x1", 0.4), ("x2", -1.5), ("v1", 2.0)]).unwrap();
        assert_eq!(c.eval(&[2.0, 0.4, -1.5]).unwrap(), direct);
        assert!(e.compile(&["x1"]).is_err());
    }
}
