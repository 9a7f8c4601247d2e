//! Expression language for Lagrangians and auxiliary functions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var     := 'x' digits | 'v' digits       (1-based chart coordinates)
//! func    := sqrt | sin | cos | exp | log
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::jet::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            _ => return None,
        })
    }
}

/// Chart variable: position `x` or velocity `v`, zero-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    V(usize),
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
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser::new(text);
        p.skip_ws();
        if p.at_end() {
            return Err(p.error("empty expression"));
        }
        let e = p.expr()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.error(&format!("unexpected '{}'", p.peek().unwrap())));
        }
        Ok(e)
    }

    /// Parses and checks that no variable exceeds `dim`.
    pub fn parse_with_dim(text: &str, dim: usize) -> Result<Expr> {
        let e = Expr::parse(text)?;
        e.check_arity(dim)?;
        Ok(e)
    }

    pub fn check_arity(&self, dim: usize) -> Result<()> {
        let mut bad = None;
        self.visit_vars(&mut |v| {
            let (name, i) = match v {
                Var::X(i) => ("x", i),
                Var::V(i) => ("v", i),
            };
            if i >= dim && bad.is_none() {
                bad = Some(format!("{name}{}", i + 1));
            }
        });
        match bad {
            Some(name) => Err(Error::Arity { name, dim }),
            None => Ok(()),
        }
    }

    pub fn depends_on_velocity(&self) -> bool {
        let mut any = false;
        self.visit_vars(&mut |v| any |= matches!(v, Var::V(_)));
        any
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.visit_vars(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Num(c) => Some(*c),
            Expr::Var(_) => None,
            Expr::Neg(a) => a.constant_value().map(|v| -v),
            Expr::Add(a, b) => Some(a.constant_value()? + b.constant_value()?),
            Expr::Sub(a, b) => Some(a.constant_value()? - b.constant_value()?),
            Expr::Mul(a, b) => Some(a.constant_value()? * b.constant_value()?),
            Expr::Div(a, b) => Some(a.constant_value()? / b.constant_value()?),
            Expr::Pow(a, b) => Some(a.constant_value()?.powf(b.constant_value()?)),
            Expr::Call(f, a) => {
                let v = a.constant_value()?;
                Some(match f {
                    Func::Sqrt => v.sqrt(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                })
            }
        }
    }

    /// Evaluates with positions `x` and velocities `v`.
    pub fn eval<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        Ok(match self {
            Expr::Num(c) => S::cst(*c),
            Expr::Var(Var::X(i)) => *x
                .get(*i)
                .ok_or_else(|| Error::Arity { name: format!("x{}", i + 1), dim: x.len() })?,
            Expr::Var(Var::V(i)) => *v
                .get(*i)
                .ok_or_else(|| Error::Arity { name: format!("v{}", i + 1), dim: v.len() })?,
            Expr::Neg(a) => -a.eval(x, v)?,
            Expr::Add(a, b) => a.eval(x, v)? + b.eval(x, v)?,
            Expr::Sub(a, b) => a.eval(x, v)? - b.eval(x, v)?,
            Expr::Mul(a, b) => a.eval(x, v)? * b.eval(x, v)?,
            Expr::Div(a, b) => {
                let d = b.eval(x, v)?;
                if d.re() == 0.0 {
                    return Err(Error::domain("division by zero"));
                }
                a.eval(x, v)? / d
            }
            Expr::Pow(a, b) => {
                let base = a.eval(x, v)?;
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() <= 64.0 => {
                        if p < 0.0 && base.re() == 0.0 {
                            return Err(Error::domain("negative power of zero"));
                        }
                        base.powi(p as i32)
                    }
                    Some(p) => {
                        if base.re() < 0.0 || (base.re() == 0.0 && p < 2.0) {
                            return Err(Error::domain(format!(
                                "non-integer power {p} of {}",
                                base.re()
                            )));
                        }
                        base.powf(p)
                    }
                    None => {
                        if base.re() <= 0.0 {
                            return Err(Error::domain("variable exponent of a non-positive base"));
                        }
                        (base.ln() * b.eval(x, v)?).exp()
                    }
                }
            }
            Expr::Call(f, a) => {
                let u = a.eval(x, v)?;
                match f {
                    Func::Sqrt => {
                        if u.re() <= 0.0 {
                            if u.re() == 0.0 {
                                return Err(Error::domain("sqrt at zero is not differentiable"));
                            }
                            return Err(Error::domain("sqrt of a negative number"));
                        }
                        u.sqrt()
                    }
                    Func::Log => {
                        if u.re() <= 0.0 {
                            return Err(Error::domain("log of a non-positive number"));
                        }
                        u.ln()
                    }
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Exp => u.exp(),
                }
            }
        })
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: Var) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(var)),
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Div(a, b) => sub(
                div(a.diff(var), (**b).clone()),
                div(
                    mul((**a).clone(), b.diff(var)),
                    pow((**b).clone(), Num(2.0)),
                ),
            ),
            Pow(a, b) => match b.constant_value() {
                Some(p) => mul(
                    mul(Num(p), pow((**a).clone(), Num(p - 1.0))),
                    a.diff(var),
                ),
                None => {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    let inner = add(
                        mul(b.diff(var), Call(Func::Log, a.clone())),
                        div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                    );
                    mul(self.clone(), inner)
                }
            },
            Call(f, a) => {
                let da = a.diff(var);
                let outer = match f {
                    Func::Sqrt => div(Num(0.5), self.clone()),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                    Func::Log => div(Num(1.0), (**a).clone()),
                };
                mul(outer, da)
            }
        }
    }
}

fn is_num(e: &Expr, c: f64) -> bool {
    matches!(e, Expr::Num(v) if *v == c)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => Expr::Num(-c),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        b
    } else if is_num(&b, 0.0) {
        a
    } else {
        Expr::Add(Box::new(a), Box::new(b))
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&a, 1.0) {
        b
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_num(&a, 0.0) {
        Expr::Num(0.0)
    } else if is_num(&b, 1.0) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_num(&b, 1.0) {
        a
    } else if is_num(&b, 0.0) {
        Expr::Num(1.0)
    } else {
        Expr::Pow(Box::new(a), Box::new(b))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::V(i)) => write!(f, "v{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
            _src: src,
        }
    }

    fn location(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn error(&self, message: &str) -> Error {
        let (line, column) = self.location(self.pos);
        Error::Parse {
            line,
            column,
            message: message.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
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
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        self.skip_ws();
        let Some(c) = self.peek() else {
            return Err(self.error("unexpected end of input"));
        };
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            let word: String = self.chars[start..self.pos].iter().collect();
            if let Some(func) = Func::from_name(&word) {
                if !self.eat('(') {
                    return Err(self.error(&format!("expected '(' after {word}")));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                return Ok(Expr::Call(func, Box::new(arg)));
            }
            if word == "pi" {
                return Ok(Expr::Num(std::f64::consts::PI));
            }
            let (kind, digits) = word.split_at(1);
            if (kind == "x" || kind == "v") && !digits.is_empty() && digits.chars().all(|d| d.is_ascii_digit()) {
                let idx: usize = digits
                    .parse()
                    .map_err(|_| self.error("variable index out of range"))?;
                if idx == 0 {
                    self.pos = start;
                    return Err(self.error("variable indices start at 1"));
                }
                return Ok(Expr::Var(if kind == "x" {
                    Var::X(idx - 1)
                } else {
                    Var::V(idx - 1)
                }));
            }
            self.pos = start;
            return Err(self.error(&format!("unknown identifier '{word}'")));
        }
        Err(self.error(&format!("unexpected '{c}'")))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map(Expr::Num).map_err(|_| {
            let (line, column) = self.location(start);
            Error::Parse {
                line,
                column,
                message: format!("invalid number '{text}'"),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    fn ev(s: &str, x: &[f64], v: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(x, v).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[], &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[], &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(ev("0.5*(v1^2+v2^2) - x1", &[2.0, 0.0], &[1.0, 3.0]), 3.0);
        assert_eq!(ev("1.5e1 + 2E-1", &[], &[]), 15.2);
        assert!((ev("sqrt(4) + exp(0) + log(1) + cos(0) + sin(pi)", &[], &[]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_location() {
        match Expr::parse("v1^2/") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 6)),
            other => panic!("{other:?}"),
        }
        match Expr::parse("v1 +\n  foo") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Expr::parse("(x1"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse(""), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("x0"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("2 3"), Err(Error::Parse { .. })));
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(
            Expr::parse_with_dim("v1 + x3", 2),
            Err(Error::Arity { ref name, dim: 2 }) if name == "x3"
        ));
        assert!(Expr::parse_with_dim("v1 + x2", 2).is_ok());
    }

    #[test]
    fn domain_errors() {
        let e = Expr::parse("log(x1)").unwrap();
        assert!(matches!(e.eval(&[-1.0], &[]), Err(Error::Domain(_))));
        let e = Expr::parse("1/x1").unwrap();
        assert!(matches!(e.eval(&[0.0], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn symbolic_derivative_matches_jet() {
        let e = Expr::parse("x1^2 * sin(x2) / (1 + x1*x2) + sqrt(1 + x1^2) + x1^x2").unwrap();
        let x = [0.7, 1.3];
        let jets = Jet::seed(&x);
        let j = e.eval(&jets, &[]).unwrap();
        for k in 0..2 {
            let d = e.diff(Var::X(k)).eval(&x, &[]).unwrap();
            assert!((d - j.grad(k)).abs() < 1e-13, "{d} vs {}", j.grad(k));
        }
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-(x1 - 2.5)^3 / v2 + exp(-x1)").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let p = ([0.3, 0.0], [0.0, 1.7]);
        assert_eq!(e.eval(&p.0, &p.1).unwrap(), again.eval(&p.0, &p.1).unwrap());
    }
}
