//! Minimal closed-form expression language for model files.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | x<i> | y<i> | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | log | sqrt | abs
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so
//! `-x1^2` is `-(x1^2)`. Variables are 1-based in the text and 0-based in
//! the tree.

use std::fmt;

use thiserror::Error;

use crate::multidiff::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Largest variable index used, as `(max x index + 1, max y index + 1)`.
    pub fn variable_bounds(&self) -> (usize, usize) {
        match self {
            Expr::Num(_) => (0, 0),
            Expr::X(i) => (i + 1, 0),
            Expr::Y(i) => (0, i + 1),
            Expr::Neg(a) | Expr::Call(_, a) => a.variable_bounds(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                let (ax, ay) = a.variable_bounds();
                let (bx, by) = b.variable_bounds();
                (ax.max(bx), ay.max(by))
            }
        }
    }

    pub fn depends_on_y(&self) -> bool {
        self.variable_bounds().1 > 0
    }

    /// Value of the expression if it contains no variables.
    pub fn constant_value(&self) -> Option<f64> {
        if self.variable_bounds() != (0, 0) {
            return None;
        }
        Some(self.eval::<f64>(&[], &[]))
    }

    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        match self {
            Expr::Num(v) => S::from_f64(*v),
            Expr::X(i) => x[*i].clone(),
            Expr::Y(i) => y[*i].clone(),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Pow(a, b) => {
                let base = a.eval(x, y);
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 => base.powi(p as i32),
                    Some(p) => base.powf(p),
                    None => (b.eval(x, y) * base.ln()).exp(),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x, y);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::Y(i) => write!(f, "y{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, prec) = match self {
                    Expr::Add(..) => (" + ", 1),
                    Expr::Sub(..) => (" - ", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                write_child(f, a, prec)?;
                write!(f, "{op}")?;
                write_child(f, b, prec + 1)
            }
            Expr::Pow(a, b) => {
                write_child(f, a, 5)?;
                write!(f, "^")?;
                write_child(f, b, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
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

    fn term(&mut self) -> Result<Expr, ParseError> {
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

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(&format!("invalid number '{text}'")))?;
        self.pos = end;
        Ok(Expr::Num(value))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_alphanumeric() {
            end += 1;
        }
        let ident = &self.src[start..end];
        if let Some(func) = Func::from_name(ident) {
            self.pos = end;
            if !self.eat('(') {
                return Err(self.error(&format!("expected '(' after {ident}")));
            }
            let arg = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        let (kind, digits) = ident.split_at(1);
        let index: Option<usize> = digits.parse().ok().filter(|&i| i >= 1);
        match (kind, index) {
            ("x", Some(i)) => {
                self.pos = end;
                Ok(Expr::X(i - 1))
            }
            ("y", Some(i)) => {
                self.pos = end;
                Ok(Expr::Y(i - 1))
            }
            _ => Err(self.error(&format!("unknown identifier '{ident}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64], y: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2*3", &[], &[]), 7.0);
        assert_eq!(eval("2^3^2", &[], &[]), 512.0);
        assert_eq!(eval("-2^2", &[], &[]), -4.0);
        assert_eq!(eval("(-2)^2", &[], &[]), 4.0);
        assert_eq!(eval("8/4/2", &[], &[]), 1.0);
        assert_eq!(eval("10 - 3 - 2", &[], &[]), 5.0);
        assert_eq!(eval("2^-1", &[], &[]), 0.5);
        assert_eq!(eval("2*-3", &[], &[]), -6.0);
        assert_eq!(eval("1.5e2 + 2E-1", &[], &[]), 150.2);
    }

    #[test]
    fn variables_and_functions() {
        let v = eval("x1^2*y2 + sin(x2) - sqrt(abs(y1))", &[3.0, 0.5], &[-4.0, 2.0]);
        assert!((v - (18.0 + 0.5f64.sin() - 2.0)).abs() < 1e-15);
        assert!((eval("exp(log(x1))", &[2.5], &[]) - 2.5).abs() < 1e-15);
        assert!((eval("x1^y1", &[2.0], &[0.5]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        let err = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(err.position, 4);
        assert!(Expr::parse("z1").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("sin x1").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn print_parse_round_trip() {
        for src in [
            "1 + 2*3",
            "-(x1 + y2)^2",
            "x1 - (y1 - y2)",
            "x1/(y1*y2)",
            "(-x1)^-2",
            "2^3^2",
            "(2^3)^2",
            "sin(x1)^2*y2*y2 + y1^2",
            "--x1",
            "0.1 + 1e-3*cos(x2)",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(Expr::parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    #[test]
    fn variable_bounds() {
        let e = Expr::parse("x3*y1 + y4").unwrap();
        assert_eq!(e.variable_bounds(), (3, 4));
        assert!(e.depends_on_y());
        assert_eq!(Expr::parse("2*3").unwrap().constant_value(), Some(6.0));
    }
}
