//! Expression language for user-supplied implicit surfaces.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := ("-")? atom ("^" integer)?
//! atom   := number | "x" | "y" | "z" | func "(" expr ")" | "(" expr ")"
//! func   := "sin" | "cos" | "tan" | "exp" | "ln" | "sqrt"
//! ```
//!
//! Only constructs that are twice continuously differentiable on their
//! domain are accepted; `abs`, rounding functions and non-integer powers are
//! rejected while parsing.

use std::fmt;

use thiserror::Error;

use crate::jet::Jet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    Z,
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Z => 2,
        }
    }

    fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, arg: Jet) -> Jet {
        match self {
            Func::Sin => arg.sin(),
            Func::Cos => arg.cos(),
            Func::Tan => arg.tan(),
            Func::Exp => arg.exp(),
            Func::Ln => arg.ln(),
            Func::Sqrt => arg.sqrt(),
        }
    }
}

/// Identifiers that name functions without a continuous second derivative.
const NON_SMOOTH: &[&str] = &[
    "abs", "sign", "sgn", "min", "max", "floor", "ceil", "round", "trunc", "mod", "step",
    "heaviside",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected {}, found {found}", expected.join(" or "))]
    Syntax {
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("non-smooth construct `{0}` is not allowed")]
    NonSmooth(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn syntax(offset: usize, expected: Vec<&'static str>, found: &Token) -> Self {
        ParseError {
            offset,
            kind: ParseErrorKind::Syntax {
                expected,
                found: found.describe(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Other(char),
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v}"),
            Token::Ident(name) => format!("`{name}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Other(c) => format!("`{c}`"),
            Token::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Returns the next token and its starting byte offset.
    fn next(&mut self) -> (Token, usize) {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return (Token::End, start);
        };
        let single = |tok| (tok, start);
        let tok = match c {
            '+' => single(Token::Plus),
            '-' => single(Token::Minus),
            '*' => single(Token::Star),
            '/' => single(Token::Slash),
            '^' => single(Token::Caret),
            '(' => single(Token::LParen),
            ')' => single(Token::RParen),
            c if c.is_ascii_digit() || c == '.' => {
                let len = number_len(rest);
                self.pos += len;
                return match rest[..len].parse::<f64>() {
                    Ok(v) => (Token::Num(v), start),
                    Err(_) => (Token::Other(c), start),
                };
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let len = rest
                    .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                    .unwrap_or(rest.len());
                self.pos += len;
                return (Token::Ident(rest[..len].to_string()), start);
            }
            other => {
                self.pos += other.len_utf8();
                return (Token::Other(other), start);
            }
        };
        self.pos += 1;
        tok
    }
}

/// Length of the numeric literal at the start of `s`: digits, optional
/// fraction, optional exponent.
fn number_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Token,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, offset) = lexer.next();
        Parser { lexer, tok, offset }
    }

    fn bump(&mut self) -> (Token, usize) {
        let (next, off) = self.lexer.next();
        let prev = std::mem::replace(&mut self.tok, next);
        let prev_off = std::mem::replace(&mut self.offset, off);
        (prev, prev_off)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Token::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.tok {
                Token::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let negate = if self.tok == Token::Minus {
            self.bump();
            true
        } else {
            false
        };
        let mut base = self.atom()?;
        if self.tok == Token::Caret {
            self.bump();
            base = Expr::Pow(Box::new(base), self.integer()?);
        }
        Ok(if negate { Expr::Neg(Box::new(base)) } else { base })
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        let negative = if self.tok == Token::Minus {
            self.bump();
            true
        } else {
            false
        };
        let (tok, off) = self.bump();
        match tok {
            Token::Num(v) => {
                let literal = &self.lexer.src[off..self.offset].trim_end();
                let integral = literal.bytes().all(|b| b.is_ascii_digit());
                if !integral || v > f64::from(i32::MAX) {
                    return Err(ParseError {
                        offset: off,
                        kind: ParseErrorKind::NonSmooth(format!("non-integer exponent {literal}")),
                    });
                }
                let n = v as i32;
                Ok(if negative { -n } else { n })
            }
            other => Err(ParseError::syntax(off, vec!["integer exponent"], &other)),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, off) = self.bump();
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "z" => Ok(Expr::Var(Var::Z)),
                _ => {
                    if let Some(func) = Func::from_name(&name) {
                        if self.tok != Token::LParen {
                            let (found, at) = self.bump();
                            return Err(ParseError::syntax(at, vec!["`(`"], &found));
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    } else if NON_SMOOTH.contains(&name.as_str()) {
                        Err(ParseError {
                            offset: off,
                            kind: ParseErrorKind::NonSmooth(name),
                        })
                    } else {
                        Err(ParseError {
                            offset: off,
                            kind: ParseErrorKind::UnknownIdentifier(name),
                        })
                    }
                }
            },
            other => Err(ParseError::syntax(
                off,
                vec!["number", "variable", "function", "`(`"],
                &other,
            )),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let (tok, off) = self.bump();
        match tok {
            Token::RParen => Ok(()),
            other => Err(ParseError::syntax(off, vec!["`)`", "operator"], &other)),
        }
    }
}

/// Parses `source` into an expression tree.
pub fn parse_expression(source: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(source);
    let expr = parser.expr()?;
    match parser.tok {
        Token::End => Ok(expr),
        ref other => Err(ParseError::syntax(
            parser.offset,
            vec!["operator", "end of input"],
            other,
        )),
    }
}

impl Expr {
    /// Evaluates the expression on second-order duals seeded at a point.
    pub fn eval_jet(&self, vars: &[Jet; 3]) -> Jet {
        match self {
            Expr::Num(v) => Jet::constant(*v),
            Expr::Var(v) => vars[v.index()],
            Expr::Neg(a) => -a.eval_jet(vars),
            Expr::Add(a, b) => a.eval_jet(vars) + b.eval_jet(vars),
            Expr::Sub(a, b) => a.eval_jet(vars) - b.eval_jet(vars),
            Expr::Mul(a, b) => a.eval_jet(vars) * b.eval_jet(vars),
            Expr::Div(a, b) => a.eval_jet(vars) / b.eval_jet(vars),
            Expr::Pow(a, n) => a.eval_jet(vars).powi(*n),
            Expr::Call(f, a) => f.apply(a.eval_jet(vars)),
        }
    }

    /// Plain floating-point evaluation (no derivatives).
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => p[v.index()],
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, n) => a.eval(p).powi(*n),
            Expr::Call(f, a) => {
                let v = a.eval(p);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    fn write_expr(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write_expr(f)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                b.write_term(f)
            }
            _ => self.write_term(f),
        }
    }

    fn write_term(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_term(f)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { " * " } else { " / " })?;
                b.write_factor(f)
            }
            Expr::Add(..) | Expr::Sub(..) => self.write_parenthesized(f),
            _ => self.write_factor(f),
        }
    }

    fn write_factor(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Neg(inner) => match inner.as_ref() {
                Expr::Pow(..) | Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => {
                    f.write_str("-")?;
                    inner.write_factor(f)
                }
                _ => {
                    f.write_str("-")?;
                    inner.write_parenthesized(f)
                }
            },
            Expr::Pow(base, n) => {
                base.write_atom(f)?;
                write!(f, "^{n}")
            }
            Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..) => {
                self.write_parenthesized(f)
            }
            _ => self.write_atom(f),
        }
    }

    fn write_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v >= 0.0 && v.is_finite() => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.write_expr(f)?;
                f.write_str(")")
            }
            _ => self.write_parenthesized(f),
        }
    }

    fn write_parenthesized(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        match self {
            // Negative literals only arise from programmatic construction.
            Expr::Num(v) => write!(f, "{v}")?,
            _ => self.write_expr(f)?,
        }
        f.write_str(")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_expr(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn var(v: Var) -> Box<Expr> {
        Box::new(Expr::Var(v))
    }

    #[test]
    fn parses_helix_surface() {
        let e = parse_expression("x - cos(z)").unwrap();
        assert_eq!(e, Expr::Sub(var(Var::X), Box::new(Expr::Call(Func::Cos, var(Var::Z)))));
        assert_eq!(parse_expression("x").unwrap(), Expr::Var(Var::X));
    }

    #[test]
    fn incomplete_input_reports_end_offset() {
        let err = parse_expression("x +").unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(matches!(err.kind, ParseErrorKind::Syntax { .. }));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expression("-x^2 + y*z/2").unwrap();
        let expected = Expr::Add(
            Box::new(Expr::Neg(Box::new(Expr::Pow(var(Var::X), 2)))),
            Box::new(Expr::Div(
                Box::new(Expr::Mul(var(Var::Y), var(Var::Z))),
                Box::new(Expr::Num(2.0)),
            )),
        );
        assert_eq!(e, expected);
        assert_eq!(parse_expression("2 - 3 - 4").unwrap().eval([0.0; 3]), -5.0);
        assert_eq!(parse_expression("x^-1").unwrap(), Expr::Pow(var(Var::X), -1));
    }

    #[test]
    fn rejects_non_smooth_constructs() {
        let err = parse_expression("y + abs(x)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::NonSmooth("abs".into()));
        let err = parse_expression("x^0.5").unwrap_err();
        assert_eq!(err.offset, 2);
        assert!(matches!(err.kind, ParseErrorKind::NonSmooth(_)));
    }

    #[test]
    fn unknown_identifiers_and_stray_tokens() {
        let err = parse_expression("x + w").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("w".into()));
        let err = parse_expression("sin x").unwrap_err();
        assert_eq!(err.offset, 4);
        let err = parse_expression("(x + y").unwrap_err();
        assert_eq!(err.offset, 6);
        let err = parse_expression("x y").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = parse_expression("x # 2").unwrap_err();
        assert_eq!(err.offset, 2);
        let err = parse_expression("--x").unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(
            parse_expression("  y^2+z^2-4 ").unwrap(),
            parse_expression("y ^ 2 + z ^ 2 - 4").unwrap()
        );
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            prop_oneof![Just(Var::X), Just(Var::Y), Just(Var::Z)].prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Tan),
                Just(Func::Exp),
                Just(Func::Ln),
                Just(Func::Sqrt)
            ];
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), -4i32..6).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
                (func, inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expression(&printed)
                .map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
            prop_assert_eq!(reparsed, e);
        }
    }
}
