//! Concrete syntax for subsystem dynamics.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | variable | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! Variables are `x<j>` / `u<j>` for one-dimensional spaces and
//! `x<j>_<d>` / `u<j>_<d>` for coordinate `d` (1-based) otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    State,
    Input,
}

/// A variable reference. `coord` is `None` for the short form `x3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub kind: VarKind,
    pub subsystem: usize,
    pub coord: Option<usize>,
}

impl Var {
    pub fn state(subsystem: usize) -> Self {
        Var {
            kind: VarKind::State,
            subsystem,
            coord: None,
        }
    }

    pub fn input(subsystem: usize) -> Self {
        Var {
            kind: VarKind::Input,
            subsystem,
            coord: None,
        }
    }

    /// Zero-based coordinate index.
    pub fn coord_index(&self) -> usize {
        self.coord.map_or(0, |c| c - 1)
    }

    fn parse(name: &str) -> Option<Var> {
        let kind = match name.as_bytes().first()? {
            b'x' => VarKind::State,
            b'u' => VarKind::Input,
            _ => return None,
        };
        let rest = &name[1..];
        let (sub, coord) = match rest.split_once('_') {
            Some((s, c)) => (s, Some(parse_index(c)?)),
            None => (rest, None),
        };
        Some(Var {
            kind,
            subsystem: parse_index(sub)?,
            coord,
        })
    }
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.starts_with('0') {
        return None;
    }
    s.parse().ok()
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.kind {
            VarKind::State => 'x',
            VarKind::Input => 'u',
        };
        match self.coord {
            Some(c) => write!(f, "{p}{}_{c}", self.subsystem),
            None => write!(f, "{p}{}", self.subsystem),
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
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Sech,
    Abs,
    Exp,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Tanh,
        Func::Sech,
        Func::Abs,
        Func::Exp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Sech => "sech",
            Func::Abs => "abs",
            Func::Exp => "exp",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Tanh => v.tanh(),
            Func::Sech => 1.0 / v.cosh(),
            Func::Abs => v.abs(),
            Func::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown function `{name}` at {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("unknown variable `{name}` at {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("division by a literal zero at {pos}")]
    ZeroDenominator { pos: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("non-finite value {value} while evaluating `{expr}`")]
    NonFinite { value: f64, expr: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Token::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Token::RParen, i));
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
                let value: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{lit}`"),
                })?;
                out.push((Token::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!(
                        "unexpected character `{}`",
                        text[i..].chars().next().unwrap()
                    ),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.bump();
            let at = self.offset();
            let rhs = self.unary()?;
            if op == BinOp::Div && rhs == Expr::Const(0.0) {
                return Err(ParseError::ZeroDenominator { pos: at });
            }
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    let func = Func::from_name(&name)
                        .ok_or(ParseError::UnknownFunction { name, pos: at })?;
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                Var::parse(&name)
                    .map(Expr::Var)
                    .ok_or(ParseError::UnknownVariable { name, pos: at })
            }
            Some(t) => {
                self.pos -= 1;
                self.error(format!("unexpected token {t:?}"))
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token::RParen) => {
                self.bump();
                Ok(())
            }
            _ => self.error("expected `)`"),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let e = p.sum()?;
    if p.pos < p.tokens.len() {
        return p.error("trailing input");
    }
    Ok(e)
}

impl Expr {
    /// Evaluates with `lookup` supplying variable values.
    pub fn eval_with<F>(&self, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&Var) -> Option<f64>,
    {
        let v = self.eval_raw(lookup)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                value: v,
                expr: self.to_string(),
            })
        }
    }

    fn eval_raw<F>(&self, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&Var) -> Option<f64>,
    {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => lookup(v).ok_or(EvalError::Unbound(*v))?,
            Expr::Neg(e) => -e.eval_raw(lookup)?,
            Expr::Call(f, e) => f.apply(e.eval_raw(lookup)?),
            Expr::Binary(op, a, b) => {
                let a = a.eval_raw(lookup)?;
                let b = b.eval_raw(lookup)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
        })
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_child(f, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                match op {
                    BinOp::Pow => {
                        a.write_child(f, a.precedence() <= p)?;
                        f.write_str("^")?;
                        b.write_child(f, b.precedence() < 3)
                    }
                    _ => {
                        a.write_child(f, a.precedence() < p)?;
                        write!(f, " {} ", op.symbol())?;
                        b.write_child(f, b.precedence() <= p)
                    }
                }
            }
        }
    }
}

/// Evaluates `expr` with named bindings such as `"x1" -> 0.5`.
pub fn eval_expr(expr: &Expr, bindings: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    expr.eval_with(&|v: &Var| bindings.get(&v.to_string()).copied())
}

/// The exact set of variable identifiers occurring in `expr`.
pub fn free_variables(expr: &Expr) -> BTreeSet<String> {
    expr.variables().iter().map(Var::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(s: &[&str]) -> BTreeSet<String> {
        s.iter().map(|s| s.to_string()).collect()
    }

    fn bind(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    const F2: &str = "0.5*tanh(x2) + 0.4*(sech(x3) - 1) + x1";
    const F5: &str = "0.5*sin(x5) + 0.4*(sech(x4) - 1) + u5";

    #[test]
    fn parses_rational_dynamics() {
        let e = parse_expression("0.5*x1/(1+x1^2)+u1").unwrap();
        let expected = Expr::Binary(
            BinOp::Add,
            Box::new(Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Binary(
                    BinOp::Mul,
                    Box::new(Expr::Const(0.5)),
                    Box::new(Expr::Var(Var::state(1))),
                )),
                Box::new(Expr::Binary(
                    BinOp::Add,
                    Box::new(Expr::Const(1.0)),
                    Box::new(Expr::Binary(
                        BinOp::Pow,
                        Box::new(Expr::Var(Var::state(1))),
                        Box::new(Expr::Const(2.0)),
                    )),
                )),
            )),
            Box::new(Expr::Var(Var::input(1))),
        );
        assert_eq!(e, expected);
        let v = eval_expr(&e, &bind(&[("x1", 1.0), ("u1", 0.0)])).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_and_no_folding() {
        assert_eq!(parse_expression("0").unwrap(), Expr::Const(0.0));
        let e = parse_expression("tanh(x2) - tanh(x2)").unwrap();
        match e {
            Expr::Binary(BinOp::Sub, a, b) => {
                assert!(matches!(*a, Expr::Call(Func::Tanh, _)));
                assert!(matches!(*b, Expr::Call(Func::Tanh, _)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_variable_sets() {
        assert_eq!(
            free_variables(&parse_expression(F5).unwrap()),
            names(&["x4", "x5", "u5"])
        );
        assert_eq!(
            free_variables(&parse_expression(F2).unwrap()),
            names(&["x1", "x2", "x3"])
        );
        assert!(free_variables(&parse_expression("0").unwrap()).is_empty());
        assert_eq!(
            free_variables(&parse_expression("x2_1 * u3_2").unwrap()),
            names(&["x2_1", "u3_2"])
        );
    }

    #[test]
    fn evaluation_cases() {
        let f5 = parse_expression(F5).unwrap();
        let v = eval_expr(&f5, &bind(&[("x4", 0.0), ("x5", 0.0), ("u5", 0.0)])).unwrap();
        assert_eq!(v, 0.0);
        let s = parse_expression("sech(x4)-1").unwrap();
        assert_eq!(eval_expr(&s, &bind(&[("x4", 0.0)])).unwrap(), 0.0);
        let p = parse_expression("-x1^2").unwrap();
        assert_eq!(eval_expr(&p, &bind(&[("x1", 3.0)])).unwrap(), -9.0);
        let r = parse_expression("2^-1").unwrap();
        assert_eq!(eval_expr(&r, &BTreeMap::new()).unwrap(), 0.5);
    }

    #[test]
    fn evaluation_errors() {
        let e = parse_expression("x1 + x2").unwrap();
        assert_eq!(
            eval_expr(&e, &bind(&[("x1", 1.0)])),
            Err(EvalError::Unbound(Var::state(2)))
        );
        let d = parse_expression("1/x1").unwrap();
        assert!(matches!(
            eval_expr(&d, &bind(&[("x1", 0.0)])),
            Err(EvalError::NonFinite { .. })
        ));
        let o = parse_expression("exp(x1)").unwrap();
        assert!(matches!(
            eval_expr(&o, &bind(&[("x1", 1000.0)])),
            Err(EvalError::NonFinite { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_positions() {
        assert!(matches!(
            parse_expression("x1 + * x2"),
            Err(ParseError::Syntax { pos: 5, .. })
        ));
        assert_eq!(
            parse_expression("1 + cosh(x1)"),
            Err(ParseError::UnknownFunction {
                name: "cosh".into(),
                pos: 4
            })
        );
        assert_eq!(
            parse_expression("y + 1"),
            Err(ParseError::UnknownVariable {
                name: "y".into(),
                pos: 0
            })
        );
        assert!(matches!(
            parse_expression("x0"),
            Err(ParseError::UnknownVariable { .. })
        ));
        assert_eq!(
            parse_expression("x1 / 0"),
            Err(ParseError::ZeroDenominator { pos: 5 })
        );
        assert!(matches!(
            parse_expression("(x1"),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression(""),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression("x1 x2"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn printing_reparses() {
        for text in [
            F2,
            F5,
            "0.5*x6/(1+abs(x6))+x5",
            "-(x1 - x2) - -x3",
            "(x1^2)^3 + x1^-2 + (-x1)^2",
            "a",
        ]
        .iter()
        .filter_map(|t| parse_expression(t).ok())
        {
            let printed = text.to_string();
            assert_eq!(parse_expression(&printed).unwrap(), text, "{printed}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn arb_expr() -> impl Strategy<Value = Expr> {
            let leaf = prop_oneof![
                (0.0f64..1e6).prop_map(Expr::Const),
                (1usize..7).prop_map(|i| Expr::Var(Var::state(i))),
                (1usize..7).prop_map(|i| Expr::Var(Var::input(i))),
            ];
            leaf.prop_recursive(5, 48, 2, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                    (0usize..7, inner.clone())
                        .prop_map(|(f, e)| Expr::Call(Func::ALL[f], Box::new(e))),
                    (
                        prop_oneof![
                            Just(BinOp::Add),
                            Just(BinOp::Sub),
                            Just(BinOp::Mul),
                            Just(BinOp::Div),
                            Just(BinOp::Pow)
                        ],
                        inner.clone(),
                        inner
                    )
                        .prop_filter("literal zero denominator", |(op, _, b)| {
                            !(*op == BinOp::Div && *b == Expr::Const(0.0))
                        })
                        .prop_map(|(op, a, b)| Expr::Binary(
                            op,
                            Box::new(a),
                            Box::new(b)
                        )),
                ]
            })
        }

        proptest! {
            #[test]
            fn print_parse_round_trip(e in arb_expr()) {
                let printed = e.to_string();
                let reparsed = parse_expression(&printed).unwrap();
                prop_assert_eq!(&reparsed, &e);
                prop_assert_eq!(parse_expression(&reparsed.to_string()).unwrap(), reparsed);
            }
        }
    }
}
