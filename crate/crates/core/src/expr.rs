//! Condition-expression language for `Condition` nodes.
//!
//! Precedence, loosest first: `or`, `and`, `not`, comparisons
//! (non-associative), `+ -`, `* /`, unary `-`, atoms. `&&`, `||` and `!`
//! are accepted as spellings of `and`, `or` and `not`.

use std::collections::BTreeMap;
use std::fmt;

use crate::value::{Tag, Value};

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "or",
            BinaryOp::And => "and",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq
            | BinaryOp::Ne
            | BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div => 6,
        }
    }

    fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

const NOT_PREC: u8 = 3;
const NEG_PREC: u8 = 7;

/// Expression tree. Equality ignores identifier spans.
#[derive(Debug, Clone)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    Ident { name: String, span: Span },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Number(a), Expr::Number(b)) => a == b,
            (Expr::Text(a), Expr::Text(b)) => a == b,
            (Expr::Bool(a), Expr::Bool(b)) => a == b,
            (Expr::Ident { name: a, .. }, Expr::Ident { name: b, .. }) => a == b,
            (
                Expr::Unary { op: o1, operand: e1 },
                Expr::Unary { op: o2, operand: e2 },
            ) => o1 == o2 && e1 == e2,
            (
                Expr::Binary { op: o1, lhs: l1, rhs: r1 },
                Expr::Binary { op: o2, lhs: l2, rhs: r2 },
            ) => o1 == o2 && l1 == l2 && r1 == r2,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at column {column}: {message}")]
pub struct SyntaxError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),
    #[error("type error: `{op}` not defined for {left}{}", right.map(|t| format!(" and {t}")).unwrap_or_default())]
    TypeError {
        op: String,
        left: Tag,
        right: Option<Tag>,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic produced a non-finite number")]
    NotANumber,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    True,
    False,
    And,
    Or,
    Not,
    Op(BinaryOp),
    LParen,
    RParen,
}

struct Lexed {
    tok: Tok,
    span: Span,
}

fn column_of(src: &str, byte: usize) -> usize {
    src[..byte.min(src.len())].chars().count() + 1
}

fn lex(src: &str) -> Result<Vec<Lexed>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |at: usize, message: String| SyntaxError {
        column: column_of(src, at),
        message,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
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
            let n: f64 = text
                .parse()
                .map_err(|_| err(start, format!("malformed number `{text}`")))?;
            if !n.is_finite() {
                return Err(err(start, format!("number `{text}` out of range")));
            }
            Tok::Num(n)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            match &src[start..i] {
                "true" => Tok::True,
                "false" => Tok::False,
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                word => Tok::Ident(word.to_string()),
            }
        } else if c == b'"' || c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(err(start, "unterminated string literal".into()));
                };
                i += ch.len_utf8();
                if ch as u32 == c as u32 {
                    break;
                }
                if ch == '\\' {
                    let Some(esc) = src[i..].chars().next() else {
                        return Err(err(start, "unterminated string literal".into()));
                    };
                    i += esc.len_utf8();
                    s.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                } else {
                    s.push(ch);
                }
            }
            Tok::Str(s)
        } else if b"<>=!&|".contains(&c) {
            while i < bytes.len() && b"<>=!&|".contains(&bytes[i]) {
                i += 1;
            }
            match &src[start..i] {
                "==" => Tok::Op(BinaryOp::Eq),
                "!=" => Tok::Op(BinaryOp::Ne),
                "<" => Tok::Op(BinaryOp::Lt),
                "<=" => Tok::Op(BinaryOp::Le),
                ">" => Tok::Op(BinaryOp::Gt),
                ">=" => Tok::Op(BinaryOp::Ge),
                "&&" => Tok::And,
                "||" => Tok::Or,
                "!" => Tok::Not,
                other => return Err(err(start, format!("unknown operator `{other}`"))),
            }
        } else {
            i += 1;
            match c {
                b'+' => Tok::Op(BinaryOp::Add),
                b'-' => Tok::Op(BinaryOp::Sub),
                b'*' => Tok::Op(BinaryOp::Mul),
                b'/' => Tok::Op(BinaryOp::Div),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(err(start, format!("unexpected character `{ch}`")));
                }
            }
        };
        out.push(Lexed {
            tok,
            span: Span { start, end: i },
        });
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Lexed>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn error_here(&self, message: impl Into<String>) -> SyntaxError {
        let at = self
            .toks
            .get(self.pos)
            .map(|l| l.span.start)
            .unwrap_or(self.src.len());
        SyntaxError {
            column: column_of(self.src, at),
            message: message.into(),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = binary(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let rhs = self.not_expr()?;
            lhs = binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            let operand = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                operand: Box::new(operand),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        match self.peek() {
            Some(Tok::Op(op)) if op.is_comparison() => {
                let op = *op;
                self.pos += 1;
                let rhs = self.additive()?;
                if let Some(Tok::Op(next)) = self.peek() {
                    if next.is_comparison() {
                        return Err(self.error_here("comparison operators do not chain"));
                    }
                }
                Ok(binary(op, lhs, rhs))
            }
            _ => Ok(lhs),
        }
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        while let Some(Tok::Op(op @ (BinaryOp::Add | BinaryOp::Sub))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ (BinaryOp::Mul | BinaryOp::Div))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek() == Some(&Tok::Op(BinaryOp::Sub)) {
            self.pos += 1;
            let operand = self.unary()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                operand: Box::new(operand),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let Some(lexed) = self.toks.get(self.pos) else {
            return Err(self.error_here("unexpected end of expression"));
        };
        let span = lexed.span;
        let expr = match &lexed.tok {
            Tok::Num(n) => Expr::Number(*n),
            Tok::Str(s) => Expr::Text(s.clone()),
            Tok::True => Expr::Bool(true),
            Tok::False => Expr::Bool(false),
            Tok::Ident(name) => Expr::Ident {
                name: name.clone(),
                span,
            },
            Tok::LParen => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error_here("expected `)`"));
                }
                self.pos += 1;
                return Ok(inner);
            }
            _ => return Err(self.error_here("expected an operand")),
        };
        self.pos += 1;
        Ok(expr)
    }
}

fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::Binary {
        op,
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
    }
}

pub fn parse(source: &str) -> Result<Expr, SyntaxError> {
    let toks = lex(source)?;
    let mut parser = Parser {
        src: source,
        toks,
        pos: 0,
    };
    let expr = parser.or_expr()?;
    if parser.pos < parser.toks.len() {
        return Err(parser.error_here("unexpected trailing input"));
    }
    Ok(expr)
}

impl Expr {
    /// Identifiers referenced by the expression, in source order.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Ident { name, .. } => out.push(name),
            Expr::Unary { operand, .. } => operand.collect_idents(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_idents(out);
                rhs.collect_idents(out);
            }
            _ => {}
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Not, .. } => NOT_PREC,
            Expr::Unary { op: UnaryOp::Neg, .. } => NEG_PREC,
            _ => u8::MAX,
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Canonical printer: minimal parentheses, `and`/`or`/`not` spellings,
/// double-quoted strings.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{}", crate::value::canonical_text(&Value::Number(*n))),
            Expr::Text(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Ident { name, .. } => f.write_str(name),
            Expr::Unary { op: UnaryOp::Not, operand } => {
                f.write_str("not ")?;
                operand.write_operand(f, operand.precedence() < NOT_PREC)
            }
            Expr::Unary { op: UnaryOp::Neg, operand } => {
                f.write_str("-")?;
                operand.write_operand(f, operand.precedence() < NEG_PREC)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                // Comparisons are non-associative, so both sides need parens
                // at equal precedence; other operators are left-associative.
                let lhs_parens = if op.is_comparison() {
                    lhs.precedence() <= p
                } else {
                    lhs.precedence() < p
                };
                lhs.write_operand(f, lhs_parens)?;
                write!(f, " {} ", op.symbol())?;
                rhs.write_operand(f, rhs.precedence() <= p)
            }
        }
    }
}

pub type Store = BTreeMap<String, Value>;

/// Evaluates a condition; the result must be a boolean.
pub fn eval_condition(expr: &Expr, store: &Store) -> Result<bool, EvalError> {
    match eval(expr, store)? {
        Value::Boolean(b) => Ok(b),
        other => Err(EvalError::TypeError {
            op: "condition".into(),
            left: other.tag(),
            right: None,
        }),
    }
}

/// Evaluates an expression to a value with strict typing.
pub fn eval(expr: &Expr, store: &Store) -> Result<Value, EvalError> {
    match expr {
        Expr::Number(n) => Ok(Value::Number(*n)),
        Expr::Text(s) => Ok(Value::Text(s.clone())),
        Expr::Bool(b) => Ok(Value::Boolean(*b)),
        Expr::Ident { name, .. } => store
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnboundIdentifier(name.clone())),
        Expr::Unary { op, operand } => {
            let v = eval(operand, store)?;
            match (op, v) {
                (UnaryOp::Not, Value::Boolean(b)) => Ok(Value::Boolean(!b)),
                (UnaryOp::Neg, Value::Number(n)) => Ok(Value::Number(-n)),
                (op, v) => Err(EvalError::TypeError {
                    op: match op {
                        UnaryOp::Not => "not".into(),
                        UnaryOp::Neg => "-".into(),
                    },
                    left: v.tag(),
                    right: None,
                }),
            }
        }
        Expr::Binary { op: op @ (BinaryOp::And | BinaryOp::Or), lhs, rhs } => {
            let l = expect_bool(*op, eval(lhs, store)?)?;
            match (op, l) {
                (BinaryOp::And, false) => Ok(Value::Boolean(false)),
                (BinaryOp::Or, true) => Ok(Value::Boolean(true)),
                _ => expect_bool(*op, eval(rhs, store)?).map(Value::Boolean),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = eval(lhs, store)?;
            let r = eval(rhs, store)?;
            apply_binary(*op, l, r)
        }
    }
}

fn expect_bool(op: BinaryOp, v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Boolean(b) => Ok(b),
        other => Err(EvalError::TypeError {
            op: op.symbol().into(),
            left: other.tag(),
            right: None,
        }),
    }
}

fn finite(n: f64) -> Result<Value, EvalError> {
    if n.is_finite() {
        Ok(Value::Number(n))
    } else {
        Err(EvalError::NotANumber)
    }
}

fn apply_binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, EvalError> {
    let type_error = |l: &Value, r: &Value| EvalError::TypeError {
        op: op.symbol().into(),
        left: l.tag(),
        right: Some(r.tag()),
    };
    match op {
        BinaryOp::Eq | BinaryOp::Ne => {
            if l.tag() != r.tag() {
                return Err(type_error(&l, &r));
            }
            let equal = l == r;
            Ok(Value::Boolean(if op == BinaryOp::Eq { equal } else { !equal }))
        }
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ordering = match (&l, &r) {
                (Value::Number(a), Value::Number(b)) => {
                    a.partial_cmp(b).ok_or(EvalError::NotANumber)?
                }
                (Value::Text(a), Value::Text(b)) => a.cmp(b),
                _ => return Err(type_error(&l, &r)),
            };
            let result = match op {
                BinaryOp::Lt => ordering.is_lt(),
                BinaryOp::Le => ordering.is_le(),
                BinaryOp::Gt => ordering.is_gt(),
                _ => ordering.is_ge(),
            };
            Ok(Value::Boolean(result))
        }
        BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
            let (Value::Number(a), Value::Number(b)) = (&l, &r) else {
                return Err(type_error(&l, &r));
            };
            match op {
                BinaryOp::Add => finite(a + b),
                BinaryOp::Sub => finite(a - b),
                BinaryOp::Mul => finite(a * b),
                _ if *b == 0.0 => Err(EvalError::DivisionByZero),
                _ => finite(a / b),
            }
        }
        BinaryOp::And | BinaryOp::Or => unreachable!("handled with short-circuit"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident(name: &str) -> Expr {
        Expr::Ident {
            name: name.into(),
            span: Span { start: 0, end: 0 },
        }
    }

    fn store(pairs: &[(&str, Value)]) -> Store {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn parses_simple_comparison() {
        let e = parse("i >= 10").unwrap();
        assert_eq!(e, binary(BinaryOp::Ge, ident("i"), Expr::Number(10.0)));
        if let Expr::Binary { lhs, .. } = &e {
            if let Expr::Ident { span, .. } = lhs.as_ref() {
                assert_eq!(*span, Span { start: 0, end: 1 });
            }
        }
    }

    #[test]
    fn double_greater_is_rejected_at_its_column() {
        let err = parse("x >>").unwrap_err();
        assert_eq!(err.column, 3);
    }

    #[test]
    fn missing_operand_reports_end_column() {
        let err = parse("x >=").unwrap_err();
        assert_eq!(err.column, 5);
        assert!(parse("").is_err());
        assert!(parse("(a").is_err());
        assert!(parse("a b").is_err());
    }

    #[test]
    fn comparisons_do_not_chain() {
        assert!(parse("a < b < c").is_err());
        assert!(parse("(a < b) == true").is_ok());
    }

    #[test]
    fn precedence_layers() {
        let e = parse("not a and b or c").unwrap();
        let expected = binary(
            BinaryOp::Or,
            binary(
                BinaryOp::And,
                Expr::Unary { op: UnaryOp::Not, operand: Box::new(ident("a")) },
                ident("b"),
            ),
            ident("c"),
        );
        assert_eq!(e, expected);
        let e = parse("-a * 2 + 1 < 3").unwrap();
        let expected = binary(
            BinaryOp::Lt,
            binary(
                BinaryOp::Add,
                binary(
                    BinaryOp::Mul,
                    Expr::Unary { op: UnaryOp::Neg, operand: Box::new(ident("a")) },
                    Expr::Number(2.0),
                ),
                Expr::Number(1.0),
            ),
            Expr::Number(3.0),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn symbolic_aliases() {
        assert_eq!(parse("a && !b || c").unwrap(), parse("a and not b or c").unwrap());
    }

    #[test]
    fn eval_examples() {
        let e = parse("i >= 10").unwrap();
        assert_eq!(eval_condition(&e, &store(&[("i", 10.0.into())])), Ok(true));
        assert_eq!(
            eval_condition(&e, &Store::new()),
            Err(EvalError::UnboundIdentifier("i".into()))
        );
        let e = parse("abs_diff < 0.001").unwrap();
        assert_eq!(eval_condition(&e, &store(&[("abs_diff", 0.0005.into())])), Ok(true));
    }

    #[test]
    fn strict_typing() {
        let s = store(&[("n", 1.0.into()), ("t", "x".into())]);
        assert!(matches!(
            eval_condition(&parse("n < t").unwrap(), &s),
            Err(EvalError::TypeError { .. })
        ));
        assert!(matches!(
            eval_condition(&parse("n + 1").unwrap(), &s),
            Err(EvalError::TypeError { .. })
        ));
        assert!(matches!(
            eval_condition(&parse("n and true").unwrap(), &s),
            Err(EvalError::TypeError { .. })
        ));
        assert_eq!(eval_condition(&parse("t == \"x\"").unwrap(), &s), Ok(true));
        assert_eq!(eval_condition(&parse("'a' < 'b'").unwrap(), &s), Ok(true));
    }

    #[test]
    fn short_circuit_skips_division_by_zero() {
        let e = parse("false and (1/0 > 0)").unwrap();
        assert_eq!(eval_condition(&e, &Store::new()), Ok(false));
        let e = parse("true or (1/0 > 0)").unwrap();
        assert_eq!(eval_condition(&e, &Store::new()), Ok(true));
        let e = parse("true and (1/0 > 0)").unwrap();
        assert_eq!(eval_condition(&e, &Store::new()), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn printer_round_trips() {
        for src in [
            "a - (b - c) > 0",
            "not (a and b) or c",
            "-(-x) <= 2 * (y + 1)",
            "(a < b) == (c >= d)",
            "s == \"q\\\"uote\"",
            "not not a",
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
