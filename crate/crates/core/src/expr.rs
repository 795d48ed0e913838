//! Tiny arithmetic expression language for coefficient functions in configs.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          // right associative
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `x` (alias of `x1`), `x1`, `x2`, `x3`, `t`, and the constants
//! `pi`, `e`. Functions: `cos`, `sin`, `exp`, `abs`, `min`, `max`.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    X(usize),
    T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Cos,
    Sin,
    Exp,
    Abs,
    Min,
    Max,
}

/// Parsed expression in the variables `x1..x3` and `t`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    uses_t: bool,
    max_x: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!("unexpected trailing input in `{src}`")));
        }
        let mut uses_t = false;
        let mut max_x = 0;
        scan(&root, &mut uses_t, &mut max_x);
        Ok(Self { source: src.trim().to_string(), root, uses_t, max_x })
    }

    /// Constant expression.
    pub fn constant(v: f64) -> Self {
        Self { source: format!("{v}"), root: Node::Num(v), uses_t: false, max_x: 0 }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Whether the expression reads `t`.
    pub fn depends_on_t(&self) -> bool {
        self.uses_t
    }

    /// Highest spatial coordinate index referenced (1-based, 0 if none).
    pub fn max_coordinate(&self) -> usize {
        self.max_x
    }

    /// Evaluates at spatial point `x` (missing coordinates read as 0) and time `t`.
    pub fn eval<T: Real>(&self, x: &[T], t: T) -> T {
        eval(&self.root, x, t)
    }
}

fn scan(n: &Node, uses_t: &mut bool, max_x: &mut usize) {
    match n {
        Node::Num(_) => {}
        Node::Var(Var::T) => *uses_t = true,
        Node::Var(Var::X(i)) => *max_x = (*max_x).max(i + 1),
        Node::Neg(a) => scan(a, uses_t, max_x),
        Node::Bin(_, a, b) => {
            scan(a, uses_t, max_x);
            scan(b, uses_t, max_x);
        }
        Node::Call(_, args) => args.iter().for_each(|a| scan(a, uses_t, max_x)),
    }
}

fn eval<T: Real>(n: &Node, x: &[T], t: T) -> T {
    match n {
        Node::Num(v) => T::lit(*v),
        Node::Var(Var::T) => t,
        Node::Var(Var::X(i)) => x.get(*i).copied().unwrap_or(T::zero()),
        Node::Neg(a) => -eval(a, x, t),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x, t), eval(b, x, t));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], x, t);
            match f {
                Func::Cos => a.cos(),
                Func::Sin => a.sin(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Min => args[1..].iter().fold(a, |m, n| m.min(eval(n, x, t))),
                Func::Max => args[1..].iter().fold(a, |m, n| m.max(eval(n, x, t))),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::Expr(format!("bad number `{s}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Sym(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_sym() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expr(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_sym() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek_sym() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.tokens.get(self.pos).cloned().ok_or_else(|| Error::Expr("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sym(c) => Err(Error::Expr(format!("unexpected `{c}`"))),
            Tok::Ident(name) => {
                if self.peek_sym() == Some('(') {
                    self.pos += 1;
                    let func = match name.as_str() {
                        "cos" => Func::Cos,
                        "sin" => Func::Sin,
                        "exp" => Func::Exp,
                        "abs" => Func::Abs,
                        "min" => Func::Min,
                        "max" => Func::Max,
                        _ => return Err(Error::Expr(format!("unknown function `{name}`"))),
                    };
                    let mut args = vec![self.expr()?];
                    while self.peek_sym() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    let arity_ok = match func {
                        Func::Min | Func::Max => args.len() >= 2,
                        _ => args.len() == 1,
                    };
                    if !arity_ok {
                        return Err(Error::Expr(format!("wrong number of arguments to `{name}`")));
                    }
                    return Ok(Node::Call(func, args));
                }
                match name.as_str() {
                    "x" | "x1" => Ok(Node::Var(Var::X(0))),
                    "x2" => Ok(Node::Var(Var::X(1))),
                    "x3" => Ok(Node::Var(Var::X(2))),
                    "t" => Ok(Node::Var(Var::T)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expr(format!("unknown identifier `{name}`"))),
                }
            }
        }
    }
}
