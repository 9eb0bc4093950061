//! A small arithmetic language for field components and scalar functions.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := unary ("^" integer)?
//! unary  := ("-")? atom
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ident  := x0 .. x15 | abs | sin | cos | exp | sqrt | min | max
//! ```
//!
//! Note that negation binds tighter than `^`, so `-x0^2` is `(-x0)^2`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Largest number of coordinates an expression may refer to.
pub const MAX_DIMENSION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

/// Syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    /// Base raised to a constant non-negative integer power.
    Pow(Box<Node>, u32),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("dimension must lie in 1..={max}, got {0}", max = MAX_DIMENSION)]
    BadDimension(usize),
    #[error("syntax error at offset {position}: {message}")]
    Syntax {
        position: usize,
        message: &'static str,
    },
    #[error("unknown identifier `{name}` at offset {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("variable x{index} at offset {position} is out of range for dimension {dimension}")]
    VariableOutOfRange {
        index: usize,
        dimension: usize,
        position: usize,
    },
    #[error("`{name}` at offset {position} takes {expected} argument(s), got {got}")]
    Arity {
        name: &'static str,
        expected: &'static str,
        got: usize,
        position: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("division by zero")]
    DivisionByZero,
}

/// A parsed expression over the coordinates `x0 .. x{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    dimension: usize,
}

impl Expression {
    pub fn parse(source: &str, dimension: usize) -> Result<Self, ParseError> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(ParseError::BadDimension(dimension));
        }
        if source.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            dimension,
            end: source.len(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError::Syntax {
                position: tok.position,
                message: "unexpected trailing input",
            });
        }
        Ok(Self { root, dimension })
    }

    /// Wraps an already built tree. Variable indices are checked against `dimension`.
    pub fn from_node(root: Node, dimension: usize) -> Result<Self, ParseError> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(ParseError::BadDimension(dimension));
        }
        if let Some(index) = max_variable(&root).filter(|&i| i >= dimension) {
            return Err(ParseError::VariableOutOfRange {
                index,
                dimension,
                position: 0,
            });
        }
        Ok(Self { root, dimension })
    }

    pub fn constant(value: f64, dimension: usize) -> Result<Self, ParseError> {
        Self::from_node(Node::Const(value), dimension)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `false` when the tree contains `abs`, `min` or `max`, whose graphs have kinks.
    pub fn is_smooth(&self) -> bool {
        fn walk(node: &Node) -> bool {
            match node {
                Node::Const(_) | Node::Var(_) => true,
                Node::Unary(UnaryOp::Abs, _) => false,
                Node::Unary(_, a) | Node::Pow(a, _) => walk(a),
                Node::Binary(BinaryOp::Min | BinaryOp::Max, _, _) => false,
                Node::Binary(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.root)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.dimension {
            return Err(EvalError::DimensionMismatch {
                expected: self.dimension,
                got: point.len(),
            });
        }
        eval_node(&self.root, point)
    }
}

fn max_variable(node: &Node) -> Option<usize> {
    match node {
        Node::Const(_) => None,
        Node::Var(i) => Some(*i),
        Node::Unary(_, a) | Node::Pow(a, _) => max_variable(a),
        Node::Binary(_, a, b) => match (max_variable(a), max_variable(b)) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        },
    }
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => x[*i],
        Node::Unary(op, a) => {
            let v = eval_node(a, x)?;
            match op {
                UnaryOp::Neg => -v,
                UnaryOp::Abs => libm::fabs(v),
                UnaryOp::Sin => libm::sin(v),
                UnaryOp::Cos => libm::cos(v),
                UnaryOp::Exp => libm::exp(v),
                UnaryOp::Sqrt => {
                    if v < 0.0 {
                        return Err(EvalError::NegativeSqrt(v));
                    }
                    libm::sqrt(v)
                }
            }
        }
        Node::Binary(op, a, b) => {
            let l = eval_node(a, x)?;
            let r = eval_node(b, x)?;
            match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => {
                    if r == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    l / r
                }
                BinaryOp::Min => {
                    if r < l {
                        r
                    } else {
                        l
                    }
                }
                BinaryOp::Max => {
                    if r > l {
                        r
                    } else {
                        l
                    }
                }
            }
        }
        Node::Pow(a, n) => powi(eval_node(a, x)?, *n),
    })
}

fn powi(mut base: f64, mut exp: u32) -> f64 {
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        base *= base;
        exp >>= 1;
    }
    acc
}

/// Fully parenthesised rendering that parses back to the same tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) => write!(f, "{c}"),
        Node::Var(i) => write!(f, "x{i}"),
        Node::Unary(UnaryOp::Neg, a) => {
            f.write_str("(-(")?;
            write_node(a, f)?;
            f.write_str("))")
        }
        Node::Unary(op, a) => {
            let name = match op {
                UnaryOp::Abs => "abs",
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Exp => "exp",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Neg => unreachable!(),
            };
            write!(f, "{name}(")?;
            write_node(a, f)?;
            f.write_str(")")
        }
        Node::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
            f.write_str(if *op == BinaryOp::Min { "min(" } else { "max(" })?;
            write_node(a, f)?;
            f.write_str(", ")?;
            write_node(b, f)?;
            f.write_str(")")
        }
        Node::Binary(op, a, b) => {
            let sym = match op {
                BinaryOp::Add => "+",
                BinaryOp::Sub => "-",
                BinaryOp::Mul => "*",
                BinaryOp::Div => "/",
                _ => unreachable!(),
            };
            f.write_str("(")?;
            write_node(a, f)?;
            write!(f, " {sym} ")?;
            write_node(b, f)?;
            f.write_str(")")
        }
        Node::Pow(a, n) => {
            f.write_str("((")?;
            write_node(a, f)?;
            write!(f, ")^{n})")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number { value: f64, integer: Option<u32> },
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b',' => Some(TokenKind::Comma),
            b'+' => Some(TokenKind::Plus),
            b'-' => Some(TokenKind::Minus),
            b'*' => Some(TokenKind::Star),
            b'/' => Some(TokenKind::Slash),
            b'^' => Some(TokenKind::Caret),
            _ => None,
        };
        if let Some(kind) = simple {
            tokens.push(Token {
                kind,
                position: start,
            });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut integral = true;
            if i < bytes.len() && bytes[i] == b'.' {
                integral = false;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                position: start,
                message: "malformed number",
            })?;
            let integer = if integral {
                text.parse::<u32>().ok()
            } else {
                None
            };
            tokens.push(Token {
                kind: TokenKind::Number { value, integer },
                position: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(source[start..i].to_string()),
                position: start,
            });
            continue;
        }
        return Err(ParseError::Syntax {
            position: start,
            message: "unexpected character",
        });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    dimension: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().is_some_and(|t| &t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, message: &'static str) -> Result<(), ParseError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                position: self.here(),
                message,
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(&TokenKind::Plus) {
                BinaryOp::Add
            } else if self.eat(&TokenKind::Minus) {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat(&TokenKind::Star) {
                BinaryOp::Mul
            } else if self.eat(&TokenKind::Slash) {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.unary()?;
        if !self.eat(&TokenKind::Caret) {
            return Ok(base);
        }
        let position = self.here();
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Number {
                integer: Some(n), ..
            }) => {
                let n = *n;
                self.pos += 1;
                Ok(Node::Pow(Box::new(base), n))
            }
            _ => Err(ParseError::Syntax {
                position,
                message: "exponent must be a non-negative integer literal",
            }),
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(&TokenKind::Minus) {
            Ok(Node::Unary(UnaryOp::Neg, Box::new(self.atom()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::Syntax {
                position: self.end,
                message: "unexpected end of input",
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Number { value, .. } => Ok(Node::Const(value)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(&TokenKind::RParen, "expected `)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(&name, tok.position),
            _ => Err(ParseError::Syntax {
                position: tok.position,
                message: "expected a number, identifier or `(`",
            }),
        }
    }

    fn identifier(&mut self, name: &str, position: usize) -> Result<Node, ParseError> {
        if let Some(index) = variable_index(name) {
            if index >= self.dimension {
                return Err(ParseError::VariableOutOfRange {
                    index,
                    dimension: self.dimension,
                    position,
                });
            }
            return Ok(Node::Var(index));
        }
        let (canonical, unary) = match name {
            "abs" => ("abs", Some(UnaryOp::Abs)),
            "sin" => ("sin", Some(UnaryOp::Sin)),
            "cos" => ("cos", Some(UnaryOp::Cos)),
            "exp" => ("exp", Some(UnaryOp::Exp)),
            "sqrt" => ("sqrt", Some(UnaryOp::Sqrt)),
            "min" => ("min", None),
            "max" => ("max", None),
            _ => {
                return Err(ParseError::UnknownIdentifier {
                    name: name.to_string(),
                    position,
                })
            }
        };
        self.expect(&TokenKind::LParen, "expected `(` after function name")?;
        let mut args = Vec::new();
        args.push(self.expr()?);
        while self.eat(&TokenKind::Comma) {
            args.push(self.expr()?);
        }
        self.expect(&TokenKind::RParen, "expected `)` closing the argument list")?;
        match unary {
            Some(op) => {
                if args.len() != 1 {
                    return Err(ParseError::Arity {
                        name: canonical,
                        expected: "1",
                        got: args.len(),
                        position,
                    });
                }
                Ok(Node::Unary(op, Box::new(args.pop().unwrap())))
            }
            None => {
                if args.len() < 2 {
                    return Err(ParseError::Arity {
                        name: canonical,
                        expected: "at least 2",
                        got: args.len(),
                        position,
                    });
                }
                let op = if canonical == "min" {
                    BinaryOp::Min
                } else {
                    BinaryOp::Max
                };
                let mut it = args.into_iter();
                let first = it.next().unwrap();
                Ok(it.fold(first, |acc, next| {
                    Node::Binary(op, Box::new(acc), Box::new(next))
                }))
            }
        }
    }
}

/// `x0` .. `x15`, without leading zeros.
fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&i| i < MAX_DIMENSION)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn eval(src: &str, dim: usize, x: &[f64]) -> f64 {
        Expression::parse(src, dim).unwrap().evaluate(x).unwrap()
    }

    #[test]
    fn identity_and_basic_ops() {
        assert_eq!(eval("x0", 1, &[0.25]), 0.25);
        assert_eq!(eval("abs(x0)", 1, &[0.5]), 0.5);
        assert_eq!(eval("abs(x0)", 1, &[-0.5]), 0.5);
        assert_eq!(eval("-x1", 2, &[3.0, 4.0]), -4.0);
        assert_eq!(eval("x0*x0 - 1", 1, &[2.0]), 3.0);
        assert_eq!(eval("x0 + x1", 2, &[1.0, 2.0]), 3.0);
        assert_eq!(eval("sin(x0)", 1, &[0.0]), 0.0);
        assert!((eval("exp(x0)", 1, &[1.0]) - core::f64::consts::E).abs() <= 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("1 + 2 * 3", 1, &[0.0]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", 1, &[0.0]), 9.0);
        assert_eq!(eval("2 * x0^2", 1, &[3.0]), 18.0);
        assert_eq!(eval("-x0^2", 1, &[3.0]), 9.0);
        assert_eq!(eval("8 / 4 / 2", 1, &[0.0]), 1.0);
        assert_eq!(eval("1 - 2 - 3", 1, &[0.0]), -4.0);
        assert_eq!(eval("x0 * -1", 1, &[2.0]), -2.0);
        assert_eq!(eval("min(x0, 1, -3)", 1, &[0.0]), -3.0);
        assert_eq!(eval("max(x0, 1)", 1, &[2.5]), 2.5);
        assert_eq!(eval("1.5e1 + .5", 1, &[0.0]), 15.5);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(Expression::parse("  ", 1), Err(ParseError::Empty));
        assert!(matches!(
            Expression::parse("x2", 2),
            Err(ParseError::VariableOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            Expression::parse("y + 1", 1),
            Err(ParseError::UnknownIdentifier { ref name, position: 0 }) if name == "y"
        ));
        assert!(matches!(
            Expression::parse("x16", 16),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expression::parse("1 +", 1),
            Err(ParseError::Syntax { position: 3, .. })
        ));
        assert!(matches!(
            Expression::parse("x0^1.5", 1),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("sin(x0, x0)", 1),
            Err(ParseError::Arity { .. })
        ));
        assert!(matches!(
            Expression::parse("--x0", 1),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("x0", 0),
            Err(ParseError::BadDimension(0))
        ));
    }

    #[test]
    fn unbalanced_parentheses_rejected() {
        for src in ["(x0", "x0)", "((x0)", "sin(x0", "(x0 + 1))", ")("] {
            assert!(Expression::parse(src, 1).is_err(), "{src}");
        }
    }

    #[test]
    fn evaluation_errors() {
        let e = Expression::parse("sqrt(x0)", 1).unwrap();
        assert_eq!(e.evaluate(&[-1.0]), Err(EvalError::NegativeSqrt(-1.0)));
        let e = Expression::parse("1 / x0", 1).unwrap();
        assert_eq!(e.evaluate(&[0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(
            e.evaluate(&[1.0, 2.0]),
            Err(EvalError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn smoothness_flag() {
        assert!(Expression::parse("sin(x0) * x1^3", 2).unwrap().is_smooth());
        assert!(!Expression::parse("abs(x0)", 1).unwrap().is_smooth());
        assert!(!Expression::parse("1 + min(x0, 0)", 1).unwrap().is_smooth());
    }

    #[test]
    fn display_reparses() {
        let e = Expression::parse("-x0^2 + 3*abs(x1)/exp(x0) - max(x1, 0.1)", 2).unwrap();
        let printed = format!("{e}");
        let back = Expression::parse(&printed, 2).unwrap();
        assert_eq!(back, e);
    }
}
