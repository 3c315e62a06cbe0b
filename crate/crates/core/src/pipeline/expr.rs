//! Arithmetic expressions for dependent properties.
//!
//! The grammar is deliberately small: numeric literals, `+ - * /`, unary
//! minus, parentheses, the constant `pi` (or `π`), the functions `pow`,
//! `min`, `max`, `sqrt` and `abs`, and references. A bare identifier refers to
//! another property of the same feature; `source.property` refers to a
//! property imprinted by an upstream feature named `source`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprParseError {
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reference {
    Local(String),
    Import { source: String, property: String },
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Local(name) => f.write_str(name),
            Reference::Import { source, property } => write!(f, "{source}.{property}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Pow,
    Min,
    Max,
    Sqrt,
    Abs,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "pow" => Func::Pow,
            "min" => Func::Min,
            "max" => Func::Max,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Pow => n == 2,
            Func::Sqrt | Func::Abs => n == 1,
            Func::Min | Func::Max => n >= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Number(f64),
    Ref(Reference),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Vec<Ast>),
}

/// A parsed expression that remembers its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    ast: Ast,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ExprParseError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens: &tokens, pos: 0, len: source.len() };
        let ast = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprParseError {
                message: format!("unexpected {:?}", tok.kind),
                offset: tok.offset,
            });
        }
        Ok(Expr { source: source.to_string(), ast })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn references(&self) -> BTreeSet<Reference> {
        let mut out = BTreeSet::new();
        collect_refs(&self.ast, &mut out);
        out
    }

    /// Evaluates with `lookup` supplying referenced values.
    pub fn eval<E>(&self, lookup: &mut impl FnMut(&Reference) -> Result<f64, E>) -> Result<f64, E> {
        eval_ast(&self.ast, lookup)
    }
}

fn collect_refs(ast: &Ast, out: &mut BTreeSet<Reference>) {
    match ast {
        Ast::Number(_) => {}
        Ast::Ref(r) => {
            out.insert(r.clone());
        }
        Ast::Neg(a) => collect_refs(a, out),
        Ast::Binary(_, a, b) => {
            collect_refs(a, out);
            collect_refs(b, out);
        }
        Ast::Call(_, args) => args.iter().for_each(|a| collect_refs(a, out)),
    }
}

fn eval_ast<E>(ast: &Ast, lookup: &mut impl FnMut(&Reference) -> Result<f64, E>) -> Result<f64, E> {
    Ok(match ast {
        Ast::Number(v) => *v,
        Ast::Ref(r) => lookup(r)?,
        Ast::Neg(a) => -eval_ast(a, lookup)?,
        Ast::Binary(op, a, b) => {
            let (a, b) = (eval_ast(a, lookup)?, eval_ast(b, lookup)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
        Ast::Call(func, args) => {
            let vals = args.iter().map(|a| eval_ast(a, lookup)).collect::<Result<Vec<_>, _>>()?;
            match func {
                Func::Pow => vals[0].powf(vals[1]),
                Func::Sqrt => vals[0].sqrt(),
                Func::Abs => vals[0].abs(),
                Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut end = i;
            let mut prev = ' ';
            while let Some(&(j, d)) = chars.peek() {
                let exp_sign = (d == '+' || d == '-') && (prev == 'e' || prev == 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    end = j + d.len_utf8();
                    prev = d;
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[start..end];
            let v: f64 = text.parse().map_err(|_| ExprParseError {
                message: format!("invalid number {text:?}"),
                offset: start,
            })?;
            out.push(Token { kind: TokKind::Num(v), offset: start });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut end = i;
            let mut dotted = false;
            while let Some(&(j, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else if d == '.' && !dotted {
                    // `source.property` is one token; the dot must be followed by a name.
                    let next = src[j + 1..].chars().next();
                    if !matches!(next, Some(n) if n.is_alphabetic() || n == '_') {
                        break;
                    }
                    dotted = true;
                    end = j + 1;
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Token { kind: TokKind::Ident(src[start..end].to_string()), offset: start });
        } else if "+-*/(),".contains(c) {
            out.push(Token { kind: TokKind::Op(c), offset: i });
            chars.next();
        } else {
            return Err(ExprParseError { message: format!("unexpected character {c:?}"), offset: i });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.len, |t| t.offset)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: TokKind::Op(c), .. }) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprParseError> {
        Err(ExprParseError { message: message.into(), offset: self.offset() })
    }

    fn expr(&mut self) -> Result<Ast, ExprParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op('+') {
                BinOp::Add
            } else if self.eat_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Ast, ExprParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op('*') {
                BinOp::Mul
            } else if self.eat_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Ast, ExprParseError> {
        if self.eat_op('-') {
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Ast, ExprParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        match tok.kind {
            TokKind::Num(v) => {
                self.pos += 1;
                Ok(Ast::Number(v))
            }
            TokKind::Op('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat_op(')') {
                    return self.fail("expected ')'");
                }
                Ok(inner)
            }
            TokKind::Op(c) => self.fail(format!("unexpected {c:?}")),
            TokKind::Ident(name) => {
                self.pos += 1;
                if self.eat_op('(') {
                    let Some(func) = Func::lookup(&name) else {
                        return Err(ExprParseError {
                            message: format!("unknown function {name:?}"),
                            offset: tok.offset,
                        });
                    };
                    let mut args = Vec::new();
                    if !self.eat_op(')') {
                        loop {
                            args.push(self.expr()?);
                            if self.eat_op(')') {
                                break;
                            }
                            if !self.eat_op(',') {
                                return self.fail("expected ',' or ')'");
                            }
                        }
                    }
                    if !func.arity_ok(args.len()) {
                        return Err(ExprParseError {
                            message: format!("wrong number of arguments to {name}"),
                            offset: tok.offset,
                        });
                    }
                    return Ok(Ast::Call(func, args));
                }
                if name == "pi" || name == "π" {
                    return Ok(Ast::Number(std::f64::consts::PI));
                }
                Ok(Ast::Ref(match name.split_once('.') {
                    Some((source, property)) => Reference::Import {
                        source: source.to_string(),
                        property: property.to_string(),
                    },
                    None => Reference::Local(name),
                }))
            }
        }
    }
}
