//! A small arithmetic expression language for coefficient and data tables.
//!
//! Grammar: numbers, `+ - * / ^`, unary minus, parentheses, the constant
//! `pi`, variables `x1..xN` and (when enabled) `eta1..etaK`, and the
//! whitelisted functions below. `norm(eta)` and `normsq(eta)` take the
//! whole gradient vector.

use std::fmt;

const UNARY: &[(&str, fn(f64) -> f64)] = &[
    ("sin", f64::sin),
    ("cos", f64::cos),
    ("tan", f64::tan),
    ("sinh", f64::sinh),
    ("cosh", f64::cosh),
    ("tanh", f64::tanh),
    ("exp", f64::exp),
    ("log", f64::ln),
    ("sqrt", f64::sqrt),
    ("abs", f64::abs),
];

const BINARY: &[(&str, fn(f64, f64) -> f64)] = &[("min", f64::min), ("max", f64::max), ("pow", f64::powf)];

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub message: String,
    pub source: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = self.source[..self.offset.min(self.source.len())].chars().count() + 1;
        write!(f, "column {col}: {} in \"{}\"", self.message, self.source)
    }
}

impl std::error::Error for ParseError {}

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub x: usize,
    pub eta: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    X(usize),
    Eta(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Unary(fn(f64) -> f64, Box<Node>),
    Binary(fn(f64, f64) -> f64, Box<Node>, Box<Node>),
    EtaNormSq,
    EtaNorm,
}

/// A parsed expression.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
}

impl Expr {
    pub fn parse(source: &str, scope: Scope) -> Result<Expr, ParseError> {
        let mut p = Parser { src: source, pos: 0, scope };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < source.len() {
            return Err(p.error(p.pos, "unexpected trailing input"));
        }
        Ok(Expr { root })
    }

    pub fn constant(value: f64) -> Expr {
        Expr { root: Node::Num(value) }
    }

    /// Evaluates at `x` and `eta`; missing variables read as zero.
    pub fn eval(&self, x: &[f64], eta: &[f64]) -> f64 {
        eval(&self.root, x, eta)
    }

    /// The value when the expression is a plain number literal.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
}

fn eval(node: &Node, x: &[f64], eta: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::X(i) => x.get(*i).copied().unwrap_or(0.0),
        Node::Eta(i) => eta.get(*i).copied().unwrap_or(0.0),
        Node::Neg(a) => -eval(a, x, eta),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x, eta), eval(b, x, eta));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => a.powf(b),
            }
        }
        Node::Unary(f, a) => f(eval(a, x, eta)),
        Node::Binary(f, a, b) => f(eval(a, x, eta), eval(b, x, eta)),
        Node::EtaNormSq => eta.iter().map(|e| e * e).sum(),
        Node::EtaNorm => eta.iter().map(|e| e * e).sum::<f64>().sqrt(),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    scope: Scope,
}

impl Parser<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            offset,
            message: message.into(),
            source: self.src.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(self.pos, format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    // right associative; binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                self.identifier(name, start)
            }
            Some(c) => Err(self.error(start, format!("unexpected character '{c}'"))),
            None => Err(self.error(start, "unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if q < bytes.len() && bytes[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        let text = &self.src[start..p];
        let value = text
            .parse::<f64>()
            .map_err(|_| self.error(start, format!("malformed number '{text}'")))?;
        self.pos = p;
        Ok(Node::Num(value))
    }

    fn indexed(&self, name: &str, prefix: &str, count: usize, start: usize) -> Option<Result<usize, ParseError>> {
        let digits = name.strip_prefix(prefix)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(match digits.parse::<usize>() {
            Ok(i) if i >= 1 && i <= count => Ok(i - 1),
            _ => Err(self.error(
                start,
                format!("variable '{name}' out of range ({prefix}1..{prefix}{count} available)"),
            )),
        })
    }

    fn identifier(&mut self, name: &str, start: usize) -> Result<Node, ParseError> {
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        if let Some(i) = self.indexed(name, "x", self.scope.x, start) {
            return i.map(Node::X);
        }
        if let Some(i) = self.indexed(name, "eta", self.scope.eta, start) {
            return i.map(Node::Eta);
        }
        if name == "norm" || name == "normsq" {
            if self.scope.eta == 0 {
                return Err(self.error(start, format!("'{name}' needs the gradient variable eta, which is not available here")));
            }
            self.expect('(')?;
            self.skip_ws();
            let arg = self.pos;
            if !self.src[arg..].starts_with("eta") {
                return Err(self.error(arg, format!("'{name}' takes the argument eta")));
            }
            self.pos += 3;
            if self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
                return Err(self.error(arg, format!("'{name}' takes the argument eta")));
            }
            self.expect(')')?;
            return Ok(if name == "norm" { Node::EtaNorm } else { Node::EtaNormSq });
        }
        if let Some((_, f)) = UNARY.iter().find(|(n, _)| *n == name) {
            self.expect('(')?;
            let a = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Unary(*f, Box::new(a)));
        }
        if let Some((_, f)) = BINARY.iter().find(|(n, _)| *n == name) {
            self.expect('(')?;
            let a = self.expr()?;
            self.expect(',')?;
            let b = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Binary(*f, Box::new(a), Box::new(b)));
        }
        Err(self.error(start, format!("unknown identifier '{name}'")))
    }
}
