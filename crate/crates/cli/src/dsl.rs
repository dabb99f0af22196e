//! The `.th` model-file language: lexer, recursive-descent parser and the
//! canonical printer. The grammar is documented in `docs/dsl.md`.
//!
//! Name resolution happens while parsing: every identifier is checked against
//! the names visible in the current statement, and each statement's
//! expression is evaluated once so that parity and typing mistakes are
//! reported with a position.

use std::fmt;

use fieldspace::probes::ProbeSpace;
use fieldspace::scalar::{Elementary, Rational};
use fieldspace::Parity;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::theory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Lexical,
    Syntax,
    UnknownName,
    Parity,
    Semantic,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Lexical => "lexical",
            ErrorKind::Syntax => "syntax",
            ErrorKind::UnknownName => "unknown-name",
            ErrorKind::Parity => "parity",
            ErrorKind::Semantic => "semantic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", self.render())]
pub struct ParseError {
    pub kind: ErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
    /// Tokens or names that would have been accepted here.
    pub expected: Vec<String>,
}

impl ParseError {
    fn render(&self) -> String {
        let mut s = format!("{}:{}: {} error: {}", self.line, self.col, self.kind, self.message);
        if !self.expected.is_empty() {
            s.push_str(&format!("; expected one of: {}", self.expected.join(", ")));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression syntax tree. Literals are exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(Rational),
    Name(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Elementary, Box<Expr>),
    /// `D[u, t, x]`: a jet coordinate.
    Deriv(String, Vec<String>),
    /// `d(x, y)`: the wedge of coordinate differentials.
    Diff(Vec<String>),
    /// `pair(L, M, R)` expands to `Σ_ab L_a M_ab R_b` over multiplets.
    Pair(Box<Expr>, String, Box<Expr>),
    Matrix(Vec<Vec<Expr>>),
}

/// A parsed model file. Statements are kept by category, so two files that
/// differ only in statement order within the allowed dependencies compare
/// equal after parsing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TheoryDocument {
    pub spacetime: Vec<String>,
    pub params: Vec<String>,
    pub fields: Vec<(String, Parity)>,
    pub multiplets: Vec<(String, Vec<String>)>,
    pub matrices: Vec<(String, Expr)>,
    pub constraints: Vec<(Expr, Expr)>,
    pub order: Option<u32>,
    pub lagrangian: Option<Expr>,
    pub probe: Option<ProbeSpace>,
    pub plots: Vec<(String, Expr)>,
    pub variations: Vec<(String, Expr)>,
    pub objects: Vec<Expr>,
    pub one_forms: Vec<Expr>,
    pub zero_forms: Vec<Expr>,
    pub elements: Vec<(String, Expr)>,
    pub connections: Vec<(String, Expr)>,
}

impl TheoryDocument {
    pub fn field_parity(&self, name: &str) -> Option<Parity> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
    }

    pub fn multiplet(&self, name: &str) -> Option<&[String]> {
        self.multiplets.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn matrix(&self, name: &str) -> Option<&Expr> {
        self.matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    fn declared(&self, name: &str) -> bool {
        self.spacetime.iter().any(|n| n == name)
            || self.params.iter().any(|n| n == name)
            || self.fields.iter().any(|(n, _)| n == name)
            || self.multiplets.iter().any(|(n, _)| n == name)
            || self.matrices.iter().any(|(n, _)| n == name)
            || self.elements.iter().any(|(n, _)| n == name)
            || self.connections.iter().any(|(n, _)| n == name)
    }
}

pub const KEYWORDS: &[&str] = &[
    "spacetime",
    "param",
    "field",
    "multiplet",
    "matrix",
    "constraint",
    "order",
    "lagrangian",
    "probe",
    "plot",
    "variation",
    "object",
    "oneform",
    "zeroform",
    "element",
    "connection",
];

const RESERVED: &[&str] = &["even", "odd", "sin", "cos", "exp", "log", "D", "d", "R", "pair"];

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: &str = "+-*/^()[],:;=|";

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            // a line ending in an operator continues on the next one
            let continues = matches!(out.last(), Some(Token { tok: Tok::Sym(c), .. }) if "+-*/^,=".contains(*c));
            if depth == 0 && !continues {
                out.push(Token {
                    tok: Tok::Newline,
                    line,
                    col,
                });
            }
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                if !(i < chars.len() && chars[i].is_ascii_digit()) {
                    return Err(ParseError {
                        kind: ErrorKind::Lexical,
                        line,
                        col: col + (i - start),
                        message: "malformed number: missing digits after `.`".into(),
                        expected: vec!["digit".into()],
                    });
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            Tok::Number(chars[start..i].iter().collect())
        } else if SYMBOLS.contains(c) {
            i += 1;
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth = depth.saturating_sub(1),
                _ => {}
            }
            Tok::Sym(c)
        } else {
            return Err(ParseError {
                kind: ErrorKind::Lexical,
                line,
                col,
                message: format!("unexpected character `{c}`"),
                expected: vec![],
            });
        };
        col += match &tok {
            Tok::Ident(s) | Tok::Number(s) => s.chars().count(),
            _ => 1,
        };
        out.push(Token {
            tok,
            line: l0,
            col: c0,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

fn parse_number(s: &str) -> Rational {
    match s.split_once('.') {
        None => Rational::from_integer(s.parse::<BigInt>().expect("digits")),
        Some((a, b)) => {
            let digits: BigInt = format!("{a}{b}").parse().expect("digits");
            Rational::new(digits, num_traits::pow(BigInt::from(10), b.len()))
        }
    }
}

// ---------------------------------------------------------------------------
// parser

/// Which names an expression may mention.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Ctx {
    Density,
    Constraint,
    Plot,
    Form,
    Connection,
    Constant,
    Free(Vec<String>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    doc: TheoryDocument,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, t: &Token, kind: ErrorKind, message: String, expected: &[&str]) -> ParseError {
        ParseError {
            kind,
            line: t.line,
            col: t.col,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek().clone();
        self.err_at(&t, ErrorKind::Syntax, format!("unexpected {}", t.tok.describe()), expected)
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect_sym(&mut self, c: char) -> PResult<()> {
        if self.is_sym(c) {
            self.next();
            Ok(())
        } else {
            let e = format!("`{c}`");
            Err(self.unexpected(&[e.as_str()]))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            _ => {
                let e = format!("`{kw}`");
                Err(self.unexpected(&[e.as_str()]))
            }
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) => {
                self.next();
                Ok((s.clone(), t))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn uint(&mut self) -> PResult<u32> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(s) if !s.contains('.') => {
                self.next();
                s.parse().map_err(|_| self.err_at(&t, ErrorKind::Semantic, format!("`{s}` is too large"), &[]))
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    /// A fresh name for a declaration.
    fn new_name(&mut self) -> PResult<String> {
        let (name, t) = self.ident()?;
        if KEYWORDS.contains(&name.as_str()) || RESERVED.contains(&name.as_str()) {
            return Err(self.err_at(&t, ErrorKind::Semantic, format!("`{name}` is reserved"), &[]));
        }
        if is_probe_name(&name) {
            return Err(self.err_at(
                &t,
                ErrorKind::Semantic,
                format!("`{name}` is reserved for probe generators"),
                &[],
            ));
        }
        if self.doc.declared(&name) {
            return Err(self.err_at(&t, ErrorKind::Semantic, format!("`{name}` is already declared"), &[]));
        }
        Ok(name)
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        let mut names = vec![self.new_name()?];
        while self.is_sym(',') {
            self.next();
            let n = self.new_name()?;
            if names.contains(&n) {
                let t = self.toks[self.pos - 1].clone();
                return Err(self.err_at(&t, ErrorKind::Semantic, format!("`{n}` is already declared"), &[]));
            }
            names.push(n);
        }
        Ok(names)
    }

    fn skip_terminators(&mut self) {
        while matches!(self.peek().tok, Tok::Newline | Tok::Sym(';')) {
            self.next();
        }
    }

    fn document(&mut self) -> PResult<()> {
        self.skip_terminators();
        let mut count = 0;
        loop {
            if self.peek().tok == Tok::Eof {
                if count == 0 {
                    let mut exp: Vec<String> = KEYWORDS.iter().map(|k| format!("`{k}`")).collect();
                    exp.sort();
                    let t = self.peek().clone();
                    let mut e = self.err_at(&t, ErrorKind::Syntax, "expected a statement".into(), &[]);
                    e.expected = exp;
                    return Err(e);
                }
                return Ok(());
            }
            self.statement()?;
            count += 1;
            match self.peek().tok {
                Tok::Newline | Tok::Sym(';') => self.skip_terminators(),
                Tok::Eof => {}
                _ => return Err(self.unexpected(&["end of line", "`;`"])),
            }
        }
    }

    fn statement(&mut self) -> PResult<()> {
        let t = self.peek().clone();
        let kw = match &t.tok {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => s.clone(),
            _ => {
                let exp: Vec<String> = KEYWORDS.iter().map(|k| format!("`{k}`")).collect();
                let mut e = self.unexpected(&[]);
                e.message = format!("expected a statement, found {}", t.tok.describe());
                e.expected = exp;
                return Err(e);
            }
        };
        self.next();
        match kw.as_str() {
            "spacetime" => {
                if !self.doc.spacetime.is_empty() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "spacetime is declared twice".into(), &[]));
                }
                self.doc.spacetime = self.name_list()?;
            }
            "param" => {
                let names = self.name_list()?;
                self.doc.params.extend(names);
            }
            "field" => {
                let names = self.name_list()?;
                self.expect_sym(':')?;
                let parity = match &self.peek().tok {
                    Tok::Ident(s) if s == "even" => Parity::Even,
                    Tok::Ident(s) if s == "odd" => Parity::Odd,
                    _ => return Err(self.unexpected(&["`even`", "`odd`"])),
                };
                self.next();
                self.doc.fields.extend(names.into_iter().map(|n| (n, parity)));
            }
            "multiplet" => {
                let name = self.new_name()?;
                self.expect_sym('=')?;
                self.expect_sym('(')?;
                let mut members = Vec::new();
                let mut parity = None;
                loop {
                    let (m, mt) = self.ident()?;
                    let Some(p) = self.doc.field_parity(&m) else {
                        let exp = self.field_names();
                        return Err(self.unknown(&mt, &m, exp));
                    };
                    if parity.is_some_and(|q| q != p) {
                        return Err(self.err_at(
                            &mt,
                            ErrorKind::Parity,
                            format!("multiplet `{name}` mixes parities at `{m}`"),
                            &[],
                        ));
                    }
                    parity = Some(p);
                    members.push(m);
                    if self.is_sym(',') {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect_sym(')')?;
                self.doc.multiplets.push((name, members));
            }
            "matrix" | "element" => {
                let name = self.new_name()?;
                self.expect_sym('=')?;
                let start = self.peek().clone();
                let e = self.expr(&Ctx::Constant)?;
                let m = theory::constant_matrix(&e).map_err(|m| self.err_at(&start, ErrorKind::Semantic, m, &[]))?;
                if kw == "element" {
                    theory::check_element(&m).map_err(|m| self.err_at(&start, ErrorKind::Semantic, m, &[]))?;
                    self.doc.elements.push((name, e));
                } else {
                    self.doc.matrices.push((name, e));
                }
            }
            "constraint" => {
                let start = self.peek().clone();
                let lhs = self.expr(&Ctx::Constraint)?;
                self.expect_sym('=')?;
                let rhs = self.expr(&Ctx::Constraint)?;
                theory::constraint_scalar(&self.doc, &lhs, &rhs).map_err(|e| self.sem(&start, e))?;
                self.doc.constraints.push((lhs, rhs));
            }
            "order" => {
                if self.doc.order.is_some() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "order is declared twice".into(), &[]));
                }
                self.doc.order = Some(self.uint()?);
            }
            "lagrangian" => {
                if self.doc.lagrangian.is_some() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "lagrangian is declared twice".into(), &[]));
                }
                if self.doc.spacetime.is_empty() || self.doc.fields.is_empty() {
                    return Err(self.err_at(
                        &t,
                        ErrorKind::Semantic,
                        "lagrangian needs a spacetime and at least one field declared before it".into(),
                        &[],
                    ));
                }
                let start = self.peek().clone();
                let e = self.expr(&Ctx::Density)?;
                theory::check_density(&self.doc, &e).map_err(|err| self.sem(&start, err))?;
                self.doc.lagrangian = Some(e);
            }
            "probe" => {
                if self.doc.probe.is_some() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "probe is declared twice".into(), &[]));
                }
                if !self.doc.plots.is_empty() || !self.doc.variations.is_empty() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "probe must precede plot statements".into(), &[]));
                }
                self.expect_keyword("R")?;
                self.expect_sym('(')?;
                let k = self.uint()? as usize;
                self.expect_sym('|')?;
                let q = self.uint()? as usize;
                self.expect_sym(')')?;
                let (mut m, mut r) = (0, 0);
                if self.is_sym('*') {
                    self.next();
                    self.expect_keyword("D")?;
                    self.expect_sym('(')?;
                    m = self.uint()? as usize;
                    self.expect_sym(',')?;
                    r = self.uint()?;
                    self.expect_sym(')')?;
                }
                let p = ProbeSpace::new(k, q, m, r).map_err(|e| self.err_at(&t, ErrorKind::Semantic, e.to_string(), &[]))?;
                if self.doc.spacetime.iter().any(|c| p.generator_names().contains(c)) {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "probe names clash with spacetime".into(), &[]));
                }
                self.doc.probe = Some(p);
            }
            "plot" | "variation" => {
                let (name, nt) = self.ident()?;
                let Some(parity) = self.doc.field_parity(&name) else {
                    let exp = self.field_names();
                    return Err(self.unknown(&nt, &name, exp));
                };
                let list = if kw == "plot" { &self.doc.plots } else { &self.doc.variations };
                if list.iter().any(|(n, _)| n == &name) {
                    return Err(self.err_at(&nt, ErrorKind::Semantic, format!("{kw} of `{name}` is given twice"), &[]));
                }
                self.expect_sym('=')?;
                let start = self.peek().clone();
                let e = self.expr(&Ctx::Plot)?;
                theory::check_plot_component(&self.doc, &name, parity, &e).map_err(|err| self.sem(&start, err))?;
                if kw == "plot" {
                    self.doc.plots.push((name, e));
                } else {
                    self.doc.variations.push((name, e));
                }
            }
            "object" | "oneform" | "zeroform" => {
                if self.doc.spacetime.is_empty() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, format!("{kw} needs a spacetime"), &[]));
                }
                let degree = match kw.as_str() {
                    "object" => 2,
                    "oneform" => 1,
                    _ => 0,
                };
                let start = self.peek().clone();
                let e = self.expr(&Ctx::Form)?;
                theory::form_of_degree(&self.doc, &e, degree).map_err(|err| self.sem(&start, err))?;
                match degree {
                    2 => self.doc.objects.push(e),
                    1 => self.doc.one_forms.push(e),
                    _ => self.doc.zero_forms.push(e),
                }
            }
            "connection" => {
                if self.doc.spacetime.is_empty() {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "connection needs a spacetime".into(), &[]));
                }
                let name = self.new_name()?;
                self.expect_sym('=')?;
                let start = self.peek().clone();
                let e = self.expr(&Ctx::Connection)?;
                theory::matrix_form(&self.doc, &e).map_err(|err| self.sem(&start, err))?;
                self.doc.connections.push((name, e));
            }
            _ => unreachable!("keyword list"),
        }
        Ok(())
    }

    fn sem(&self, at: &Token, e: theory::EvalError) -> ParseError {
        let kind = if e.parity { ErrorKind::Parity } else { ErrorKind::Semantic };
        self.err_at(at, kind, e.message, &[])
    }

    fn field_names(&self) -> Vec<String> {
        self.doc.fields.iter().map(|(n, _)| format!("`{n}`")).collect()
    }

    fn unknown(&self, t: &Token, name: &str, expected: Vec<String>) -> ParseError {
        ParseError {
            kind: ErrorKind::UnknownName,
            line: t.line,
            col: t.col,
            message: format!("unknown name `{name}`"),
            expected,
        }
    }

    fn visible(&self, ctx: &Ctx) -> Vec<String> {
        let d = &self.doc;
        let fields = d.fields.iter().map(|(n, _)| n.clone());
        let mut v: Vec<String> = match ctx {
            Ctx::Density => d.spacetime.iter().chain(&d.params).cloned().chain(fields).collect(),
            Ctx::Constraint => fields.collect(),
            Ctx::Plot => {
                let mut v: Vec<String> = d.spacetime.iter().chain(&d.params).cloned().collect();
                v.extend(d.probe.unwrap_or_else(ProbeSpace::point).generator_names());
                v
            }
            Ctx::Form | Ctx::Connection => d.spacetime.iter().chain(&d.params).cloned().collect(),
            Ctx::Constant => vec![],
            Ctx::Free(vars) => vars.clone(),
        };
        v.sort();
        v
    }

    fn expr(&mut self, ctx: &Ctx) -> PResult<Expr> {
        let mut lhs = self.term(ctx)?;
        loop {
            let op = if self.is_sym('+') {
                BinOp::Add
            } else if self.is_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.term(ctx)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self, ctx: &Ctx) -> PResult<Expr> {
        let mut lhs = self.unary(ctx)?;
        loop {
            let op = if self.is_sym('*') {
                BinOp::Mul
            } else if self.is_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.unary(ctx)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self, ctx: &Ctx) -> PResult<Expr> {
        if self.is_sym('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary(ctx)?)));
        }
        let base = self.atom(ctx)?;
        if !self.is_sym('^') {
            return Ok(base);
        }
        self.next();
        let negative = self.is_sym('-');
        if negative {
            self.next();
        }
        let t = self.peek().clone();
        let n = self.uint()?;
        let n = i32::try_from(n).map_err(|_| self.err_at(&t, ErrorKind::Semantic, "exponent is too large".into(), &[]))?;
        Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
    }

    const ATOM_START: &'static [&'static str] = &["number", "identifier", "`(`", "`-`"];

    fn atom(&mut self, ctx: &Ctx) -> PResult<Expr> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(s) => {
                self.next();
                Ok(Expr::Num(parse_number(s)))
            }
            Tok::Sym('(') => {
                self.next();
                let e = self.expr(ctx)?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Sym('[') => {
                if !matches!(ctx, Ctx::Constant | Ctx::Connection) {
                    return Err(self.err_at(&t, ErrorKind::Semantic, "matrix literal is not allowed here".into(), &[]));
                }
                self.matrix_literal(ctx)
            }
            Tok::Ident(name) => {
                let name = name.clone();
                self.next();
                if let Some(kind) = Elementary::from_name(&name) {
                    self.expect_sym('(')?;
                    let arg = self.expr(ctx)?;
                    self.expect_sym(')')?;
                    return Ok(Expr::Call(kind, Box::new(arg)));
                }
                match name.as_str() {
                    "D" if self.is_sym('[') => {
                        if *ctx != Ctx::Density {
                            return Err(self.err_at(&t, ErrorKind::Semantic, "jet derivative outside a lagrangian".into(), &[]));
                        }
                        let (field, coords) = self.deriv_args(false)?;
                        Ok(Expr::Deriv(field, coords))
                    }
                    "d" if self.is_sym('(') => {
                        if !matches!(ctx, Ctx::Form | Ctx::Connection) {
                            return Err(self.err_at(&t, ErrorKind::Semantic, "differential outside a form".into(), &[]));
                        }
                        self.next();
                        let mut coords = vec![self.coord()?];
                        while self.is_sym(',') {
                            self.next();
                            coords.push(self.coord()?);
                        }
                        self.expect_sym(')')?;
                        Ok(Expr::Diff(coords))
                    }
                    "pair" if self.is_sym('(') => {
                        if *ctx != Ctx::Density {
                            return Err(self.err_at(&t, ErrorKind::Semantic, "pair outside a lagrangian".into(), &[]));
                        }
                        self.next();
                        let l = self.pair_operand()?;
                        self.expect_sym(',')?;
                        let (m, mt) = self.ident()?;
                        let Some(mat) = self.doc.matrix(&m) else {
                            let exp = self.doc.matrices.iter().map(|(n, _)| format!("`{n}`")).collect();
                            return Err(self.unknown(&mt, &m, exp));
                        };
                        let size = theory::constant_matrix(mat).map(|m| m.size()).unwrap_or(0);
                        self.expect_sym(',')?;
                        let r = self.pair_operand()?;
                        self.expect_sym(')')?;
                        for side in [&l, &r] {
                            let len = self.doc.multiplet(theory::pair_multiplet(side)).map_or(0, |v| v.len());
                            if len != size {
                                return Err(self.err_at(
                                    &t,
                                    ErrorKind::Semantic,
                                    format!("matrix `{m}` is {size}x{size} but a multiplet has {len} members"),
                                    &[],
                                ));
                            }
                        }
                        Ok(Expr::Pair(Box::new(l), m, Box::new(r)))
                    }
                    _ => {
                        let visible = self.visible(ctx);
                        if visible.contains(&name) {
                            return Ok(Expr::Name(name));
                        }
                        if *ctx == Ctx::Density && self.doc.multiplet(&name).is_some() {
                            return Err(self.err_at(&t, ErrorKind::Semantic, format!("multiplet `{name}` used outside pair"), &[]));
                        }
                        if *ctx == Ctx::Constraint && self.doc.spacetime.contains(&name) {
                            return Err(self.err_at(&t, ErrorKind::Semantic, format!("constraints may not mention the coordinate `{name}`"), &[]));
                        }
                        Err(self.unknown(&t, &name, visible.iter().map(|v| format!("`{v}`")).collect()))
                    }
                }
            }
            _ => Err(self.unexpected(Self::ATOM_START)),
        }
    }

    fn coord(&mut self) -> PResult<String> {
        let (c, ct) = self.ident()?;
        if !self.doc.spacetime.contains(&c) {
            let exp = self.doc.spacetime.iter().map(|n| format!("`{n}`")).collect();
            return Err(self.unknown(&ct, &c, exp));
        }
        Ok(c)
    }

    /// `[u, t, x]` after `D`; with `multiplet` the head names a multiplet.
    fn deriv_args(&mut self, multiplet: bool) -> PResult<(String, Vec<String>)> {
        self.expect_sym('[')?;
        let (field, ft) = self.ident()?;
        let known = if multiplet {
            self.doc.multiplet(&field).is_some()
        } else {
            self.doc.field_parity(&field).is_some()
        };
        if !known {
            let exp = if multiplet {
                self.doc.multiplets.iter().map(|(n, _)| format!("`{n}`")).collect()
            } else {
                self.field_names()
            };
            return Err(self.unknown(&ft, &field, exp));
        }
        let mut coords = Vec::new();
        while self.is_sym(',') {
            self.next();
            coords.push(self.coord()?);
        }
        self.expect_sym(']')?;
        Ok((field, coords))
    }

    fn pair_operand(&mut self) -> PResult<Expr> {
        let (name, t) = self.ident()?;
        if name == "D" && self.is_sym('[') {
            let (m, coords) = self.deriv_args(true)?;
            return Ok(Expr::Deriv(m, coords));
        }
        if self.doc.multiplet(&name).is_none() {
            let exp = self.doc.multiplets.iter().map(|(n, _)| format!("`{n}`")).collect();
            return Err(self.unknown(&t, &name, exp));
        }
        Ok(Expr::Name(name))
    }

    fn matrix_literal(&mut self, ctx: &Ctx) -> PResult<Expr> {
        self.expect_sym('[')?;
        let mut rows = Vec::new();
        loop {
            self.expect_sym('[')?;
            let mut row = vec![self.expr(ctx)?];
            while self.is_sym(',') {
                self.next();
                row.push(self.expr(ctx)?);
            }
            self.expect_sym(']')?;
            rows.push(row);
            if self.is_sym(',') {
                self.next();
            } else {
                break;
            }
        }
        self.expect_sym(']')?;
        Ok(Expr::Matrix(rows))
    }
}

fn is_probe_name(name: &str) -> bool {
    ["s", "th", "e"].iter().any(|p| {
        name.strip_prefix(p)
            .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
    })
}

/// Parses a complete model file.
pub fn parse(src: &str) -> Result<TheoryDocument, ParseError> {
    parse_with(src, None)
}

/// Parses `src` on top of the declarations of `base`, as used for plot and
/// variation files that refer to a model's fields.
pub fn parse_with(src: &str, base: Option<&TheoryDocument>) -> Result<TheoryDocument, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        doc: base.cloned().unwrap_or_default(),
    };
    p.document()?;
    Ok(p.doc)
}

/// Parses a standalone expression in the variables `vars`.
pub fn parse_expression(src: &str, vars: &[String]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        doc: TheoryDocument::default(),
    };
    let ctx = Ctx::Free(vars.to_vec());
    let e = p.expr(&ctx)?;
    p.skip_terminators();
    if p.peek().tok != Tok::Eof {
        return Err(p.unexpected(&["operator", "end of input"]));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// printer

fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    // terminating decimals print as decimals, so that literals read back
    let mut den = r.denom().clone();
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let (mut a, mut b) = (0usize, 0usize);
    while (&den % &two).is_zero() {
        den /= &two;
        a += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        b += 1;
    }
    if den.is_one() {
        let k = a.max(b);
        let scaled = (r * Rational::from_integer(num_traits::pow(BigInt::from(10), k))).to_integer();
        let digits = scaled.abs().to_string();
        let digits = format!("{digits:0>width$}", width = k + 1);
        let (int, frac) = digits.split_at(digits.len() - k);
        let sign = if scaled.is_negative() { "-" } else { "" };
        return format!("{sign}{int}.{frac}");
    }
    format!("({}/{})", r.numer(), r.denom())
}

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(r) if r.is_negative() => 3,
            _ => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            write!(f, "(")?;
            self.write_at(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Num(r) => write!(f, "{}", fmt_rational(r)),
            Expr::Name(n) => write!(f, "{n}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.write_at(f, 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                };
                a.write_at(f, lp)?;
                write!(f, "{sym}")?;
                b.write_at(f, rp)
            }
            Expr::Pow(b, n) => {
                b.write_at(f, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(k, a) => write!(f, "{}({a})", k.name()),
            Expr::Deriv(u, cs) => {
                write!(f, "D[{u}")?;
                for c in cs {
                    write!(f, ", {c}")?;
                }
                write!(f, "]")
            }
            Expr::Diff(cs) => write!(f, "d({})", cs.join(", ")),
            Expr::Pair(l, m, r) => write!(f, "pair({l}, {m}, {r})"),
            Expr::Matrix(rows) => {
                let rows: Vec<String> = rows
                    .iter()
                    .map(|r| format!("[{}]", r.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")))
                    .collect();
                write!(f, "[{}]", rows.join(", "))
            }
        }
    }

    /// Highest number of jet derivatives in any `D[..]`.
    pub fn max_derivative(&self) -> u32 {
        match self {
            Expr::Deriv(_, cs) => cs.len() as u32,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.max_derivative(),
            Expr::Bin(_, a, b) | Expr::Pair(a, _, b) => a.max_derivative().max(b.max_derivative()),
            Expr::Matrix(rows) => rows.iter().flatten().map(Expr::max_derivative).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Expr::Num(r) if r.is_integer() => r.to_integer().to_i64(),
            Expr::Neg(e) => e.as_integer().map(|n| -n),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl fmt::Display for TheoryDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.spacetime.is_empty() {
            writeln!(f, "spacetime {}", self.spacetime.join(", "))?;
        }
        for p in &self.params {
            writeln!(f, "param {p}")?;
        }
        for (n, p) in &self.fields {
            writeln!(f, "field {n} : {}", p.name())?;
        }
        for (n, m) in &self.multiplets {
            writeln!(f, "multiplet {n} = ({})", m.join(", "))?;
        }
        for (n, m) in &self.matrices {
            writeln!(f, "matrix {n} = {m}")?;
        }
        for (l, r) in &self.constraints {
            writeln!(f, "constraint {l} = {r}")?;
        }
        if let Some(o) = self.order {
            writeln!(f, "order {o}")?;
        }
        if let Some(l) = &self.lagrangian {
            writeln!(f, "lagrangian {l}")?;
        }
        if let Some(p) = &self.probe {
            writeln!(f, "probe {p}")?;
        }
        for (n, e) in &self.plots {
            writeln!(f, "plot {n} = {e}")?;
        }
        for (n, e) in &self.variations {
            writeln!(f, "variation {n} = {e}")?;
        }
        for e in &self.objects {
            writeln!(f, "object {e}")?;
        }
        for e in &self.one_forms {
            writeln!(f, "oneform {e}")?;
        }
        for e in &self.zero_forms {
            writeln!(f, "zeroform {e}")?;
        }
        for (n, e) in &self.elements {
            writeln!(f, "element {n} = {e}")?;
        }
        for (n, e) in &self.connections {
            writeln!(f, "connection {n} = {e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_fails_at_origin() {
        let e = parse("").unwrap_err();
        assert_eq!((e.line, e.col, e.kind), (1, 1, ErrorKind::Syntax));
        assert!(e.expected.contains(&"`lagrangian`".to_string()));
    }

    #[test]
    fn lexical_error_has_position() {
        let e = parse("spacetime t\nfield u : even\nlagrangian u @ 2").unwrap_err();
        assert_eq!((e.line, e.col, e.kind), (3, 14, ErrorKind::Lexical));
    }

    #[test]
    fn odd_lagrangian_is_a_parity_error() {
        let e = parse("spacetime t\nfield psi : odd\nlagrangian psi").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Parity);
        assert_eq!((e.line, e.col), (3, 12));
    }

    #[test]
    fn unknown_name_lists_visible_names() {
        let e = parse("spacetime t\nfield u : even\nlagrangian v^2").unwrap_err();
        assert_eq!(e.kind, ErrorKind::UnknownName);
        assert_eq!((e.line, e.col), (3, 12));
        assert!(e.expected.contains(&"`u`".to_string()));
    }

    #[test]
    fn missing_paren_is_syntax_error() {
        let e = parse("spacetime t\nfield u : even\nlagrangian (u + 1").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax);
        assert_eq!(e.expected, vec!["`)`".to_string()]);
    }

    #[test]
    fn printer_round_trips() {
        let src = "spacetime t\nfield u : even\nparam m\nlagrangian 0.5*D[u, t]^2 - m/2*u^2 + -(u - (u - 1))\n";
        let doc = parse(src).unwrap();
        let printed = doc.to_string();
        assert_eq!(parse(&printed).unwrap(), doc);
        assert!(printed.contains("0.5*D[u, t]^2"));
    }

    #[test]
    fn decimal_printing() {
        assert_eq!(fmt_rational(&parse_number("0.050")), "0.05");
        assert_eq!(fmt_rational(&parse_number("12.5")), "12.5");
        assert_eq!(fmt_rational(&parse_number("3")), "3");
    }

    #[test]
    fn newlines_inside_brackets_are_ignored() {
        let doc = parse("spacetime t\nfield u : even\nlagrangian (D[u, t]^2\n  - u^2)\n").unwrap();
        assert!(doc.lagrangian.is_some());
    }
}
