//! Coefficient expressions: numbers, `x`, `y`, `pi`, `+ - * / ^`, unary
//! minus, `sin cos exp tanh` and parentheses.
//!
//! Precedence from tight to loose: `^` (right associative), unary `-`,
//! `* /`, `+ -`. `-2^2` is `-(2^2)`; the exponent of `^` may carry its own
//! sign, as in `2^-1`.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "tanh" => Some(Func::Tanh),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{name}` at byte {offset} takes exactly one argument, got {got}")]
    Arity { offset: usize, name: String, got: usize },
    #[error("`y` is not available on a one-dimensional domain")]
    YInOneDim,
    #[error("expression is not finite at ({x}, {y})")]
    NotFinite { x: f64, y: f64 },
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x, y),
            Expr::Call(f, e) => f.apply(e.eval(x, y)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y), b.eval(x, y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    pub fn uses_y(&self) -> bool {
        match self {
            Expr::Y => true,
            Expr::Num(_) | Expr::X | Expr::Pi => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_y(),
            Expr::Bin(_, a, b) => a.uses_y() || b.uses_y(),
        }
    }

    /// Rejects `y` in 1-D and non-finite values on a probe grid of the unit
    /// interval / square.
    pub fn validate(&self, dim: usize) -> Result<(), ExprError> {
        if dim == 1 && self.uses_y() {
            return Err(ExprError::YInOneDim);
        }
        let probes = 11;
        let ys = if dim == 1 { 1 } else { probes };
        for i in 0..probes {
            for j in 0..ys {
                let x = i as f64 / (probes - 1) as f64;
                let y = if dim == 1 { 0.0 } else { j as f64 / (probes - 1) as f64 };
                if !self.eval(x, y).is_finite() {
                    return Err(ExprError::NotFinite { x, y });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized; parses back to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:e}"),
            Expr::X => f.write_str("x"),
            Expr::Y => f.write_str("y"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                let ch = src[start..].chars().next().unwrap_or(c);
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return Err(self.syntax("unexpected end of input"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "pi" => Ok(Expr::Pi),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ExprError::UnknownIdentifier { offset, name });
                    };
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(self.syntax(format!("expected `(` after `{name}`")));
                    }
                    self.pos += 1;
                    if self.peek() == Some(&Tok::RParen) {
                        return Err(ExprError::Arity { offset, name, got: 0 });
                    }
                    let arg = self.sum()?;
                    let mut got = 1;
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        self.sum()?;
                        got += 1;
                    }
                    if got != 1 {
                        return Err(ExprError::Arity { offset, name, got });
                    }
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                }
            },
            Tok::Op(c) => Err(ExprError::Syntax {
                offset,
                message: format!("unexpected operator `{c}`"),
            }),
            Tok::RParen => Err(ExprError::Syntax {
                offset,
                message: "unexpected `)`".into(),
            }),
            Tok::Comma => Err(ExprError::Syntax {
                offset,
                message: "unexpected `,`".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax("expected `)`"))
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let expr = parser.sum()?;
    if parser.pos < parser.toks.len() {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(expr)
}
