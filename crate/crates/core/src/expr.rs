//! Expressions in the single variable `s`.
//!
//! Kernels `g(s)` and control densities `n(s)` arrive as text (CLI flags, JSON
//! fields). The grammar is deliberately small:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | 's' | 'pi' | 'e' | func '(' args ')' | '(' expr ')'
//! func    := sin cos tan exp log sqrt abs  (one argument)
//!          | min max                       (two arguments)
//! ```
//!
//! Unary minus binds looser than `^`, so `-s^2` is `-(s^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                *offset
            }
        }
    }
}

/// Evaluation left the real domain. `subexpression` is the printed form of the
/// offending node.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error in `{subexpression}` at s = {at}: {reason}")]
pub struct DomainError {
    pub subexpression: String,
    pub at: f64,
    pub reason: String,
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Abstract syntax tree of a parsed expression. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Num(f64),
    Var,
    Const(Constant),
    Neg(Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
    Call(Func, Vec<Expression>),
}

impl Expression {
    pub fn parse(text: &str) -> Result<Expression, ParseError> {
        Parser::new(text)?.parse_all()
    }

    pub fn num(v: f64) -> Expression {
        Expression::Num(v)
    }

    pub fn binary(op: BinOp, lhs: Expression, rhs: Expression) -> Expression {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn negate(self) -> Expression {
        Expression::Neg(Box::new(self))
    }

    /// Replaces every occurrence of `s` by `replacement`.
    pub fn substitute(&self, replacement: &Expression) -> Expression {
        match self {
            Expression::Var => replacement.clone(),
            Expression::Num(_) | Expression::Const(_) => self.clone(),
            Expression::Neg(inner) => Expression::Neg(Box::new(inner.substitute(replacement))),
            Expression::Binary(op, l, r) => Expression::Binary(
                *op,
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expression::Call(f, args) => {
                Expression::Call(*f, args.iter().map(|a| a.substitute(replacement)).collect())
            }
        }
    }

    pub fn evaluate(&self, s: f64) -> Result<f64, DomainError> {
        let v = match self {
            Expression::Num(v) => *v,
            Expression::Var => s,
            Expression::Const(c) => c.value(),
            Expression::Neg(inner) => -inner.evaluate(s)?,
            Expression::Binary(op, l, r) => {
                let a = l.evaluate(s)?;
                let b = r.evaluate(s)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain_error(s, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(
                                self.domain_error(s, "negative base with non-integer exponent")
                            );
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(self.domain_error(s, "zero raised to a negative power"));
                        }
                        a.powf(b)
                    }
                }
            }
            Expression::Call(f, args) => {
                let x = args[0].evaluate(s)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(self.domain_error(s, "logarithm of a non-positive value"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain_error(s, "square root of a negative value"));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Min => x.min(args[1].evaluate(s)?),
                    Func::Max => x.max(args[1].evaluate(s)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error(s, "non-finite result"))
        }
    }

    /// True when the expression does not mention `s`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expression::Var => false,
            Expression::Num(_) | Expression::Const(_) => true,
            Expression::Neg(inner) => inner.is_constant(),
            Expression::Binary(_, l, r) => l.is_constant() && r.is_constant(),
            Expression::Call(_, args) => args.iter().all(Expression::is_constant),
        }
    }

    fn domain_error(&self, s: f64, reason: &str) -> DomainError {
        DomainError {
            subexpression: self.to_string(),
            at: s,
            reason: reason.to_string(),
        }
    }
}

/// Fully parenthesized canonical form; parsing it yields the same tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Num(v) => write!(f, "{v:?}"),
            Expression::Var => f.write_str("s"),
            Expression::Const(Constant::Pi) => f.write_str("pi"),
            Expression::Const(Constant::E) => f.write_str("e"),
            Expression::Neg(inner) => write!(f, "(-{inner})"),
            Expression::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expression::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
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
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

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

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn parse_all(&mut self) -> Result<Expression, ParseError> {
        if *self.peek() == Tok::End {
            return self.syntax("empty expression");
        }
        let e = self.expr()?;
        match self.peek() {
            Tok::End => Ok(e),
            _ => self.syntax("unexpected trailing input"),
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(self.unary()?.negate());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expression::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expression::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.syntax("expected `)`");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "s" => return Ok(Expression::Var),
                    "pi" => return Ok(Expression::Const(Constant::Pi)),
                    "e" => return Ok(Expression::Const(Constant::E)),
                    _ => {}
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError::UnknownIdentifier { offset, name });
                };
                if *self.peek() != Tok::LParen {
                    return self.syntax(format!("expected `(` after `{name}`"));
                }
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                if *self.peek() != Tok::RParen {
                    return self.syntax("expected `)` or `,`");
                }
                if args.len() != func.arity() {
                    return Err(ParseError::Syntax {
                        offset,
                        message: format!(
                            "`{name}` takes {} argument(s), got {}",
                            func.arity(),
                            args.len()
                        ),
                    });
                }
                self.bump();
                Ok(Expression::Call(func, args))
            }
            Tok::End => self.syntax("unexpected end of input"),
            Tok::Op(c) => self.syntax(format!("unexpected `{c}`")),
            Tok::RParen => self.syntax("unexpected `)`"),
            Tok::Comma => self.syntax("unexpected `,`"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                toks.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // exponent only when digits follow, so `2e` stays `2` then `e`
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut k = i + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        i = k;
                    }
                }
                let lexeme = &text[start..i];
                match lexeme.parse::<f64>() {
                    Ok(v) if v.is_finite() => toks.push((Tok::Num(v), start)),
                    _ => {
                        return Err(ParseError::Syntax {
                            offset: start,
                            message: format!("malformed number `{lexeme}`"),
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    toks.push((Tok::End, text.len()));
    Ok(toks)
}
