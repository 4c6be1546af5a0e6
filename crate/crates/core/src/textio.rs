//! Text formats for mappings, instances, queries, and source constraint
//! fragments.
//!
//! The grammar is line oriented. `#` starts a comment. Variables are bare
//! identifiers, constants are double-quoted strings or integer literals,
//! nulls are `_N<k>` (instance files in target mode only). Conjunction is
//! `&`, implication `->`, and schema declarations use `Name/arity` entries
//! separated by `;`.
//!
//! ```text
//! source: Task_Assignments/3; Sign_Offs/2
//! target: Departments/2; Tasks/2; Stakeholders_new/2
//! st-tgd: Task_Assignments(p, t, d) -> Departments(p, d) & Tasks(p, t)
//! st-so:  R(x, y) -> T(x, f(x, y))
//! t-egd:  Departments(p, d) & Departments(p, d2) -> d = d2
//! ```
//!
//! Fact lines end with a period: `Tasks("peter", "tpsreport").` Query
//! lines read `query name(p, s) :- Tasks(p, t) & Stakeholders_new(t, s)`;
//! several lines with the same head form a union.
//!
//! Serialization is canonical and bit-stable: single space after commas,
//! one constraint per line, facts in instance order. `parse(serialize(x))`
//! is the identity on ASTs.

use std::collections::BTreeSet;

use indexmap::IndexMap;

use crate::mapping::{Egd, SchemaMapping, SoClause, StConstraint, TargetConstraint, Tgd};
use crate::query::{Cq, Ucq};
use crate::schema::{Fact, Instance, Schema};
use crate::term::{atoms_vars, Atom, Term};
use crate::value::{Constant, Value};
use crate::{Error, Result};

/// How to treat nulls and compound values in instance files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceMode {
    /// Source instances are ground: nulls and compounds are rejected.
    Source,
    /// Target instances may contain `_N<k>` nulls and functional values.
    Target,
}

// ---------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Semi,
    Slash,
    Eq,
    Amp,
    Arrow,
    QueryIf,
    Period,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s}"),
            Tok::Int(n) => format!("integer {n}"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Eq => "'='".into(),
            Tok::Amp => "'&'".into(),
            Tok::Arrow => "'->'".into(),
            Tok::QueryIf => "':-'".into(),
            Tok::Period => "'.'".into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    // Brackets appear inside generated relation names like T_0_f[00].
    c.is_ascii_alphanumeric() || c == '_' || c == '[' || c == ']'
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Lexer {
    fn new(text: &str, line: usize, col_offset: usize) -> Result<Self> {
        let mut toks = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let col = col_offset + i + 1;
            let c = chars[i];
            match c {
                ' ' | '\t' => i += 1,
                '(' => {
                    toks.push((Tok::LParen, col));
                    i += 1;
                }
                ')' => {
                    toks.push((Tok::RParen, col));
                    i += 1;
                }
                ',' => {
                    toks.push((Tok::Comma, col));
                    i += 1;
                }
                ';' => {
                    toks.push((Tok::Semi, col));
                    i += 1;
                }
                '/' => {
                    toks.push((Tok::Slash, col));
                    i += 1;
                }
                '=' => {
                    toks.push((Tok::Eq, col));
                    i += 1;
                }
                '&' => {
                    toks.push((Tok::Amp, col));
                    i += 1;
                }
                '.' => {
                    toks.push((Tok::Period, col));
                    i += 1;
                }
                ':' => {
                    if chars.get(i + 1) == Some(&'-') {
                        toks.push((Tok::QueryIf, col));
                        i += 2;
                    } else {
                        return Err(Error::parse(line, col, "unexpected ':'"));
                    }
                }
                '-' => {
                    if chars.get(i + 1) == Some(&'>') {
                        toks.push((Tok::Arrow, col));
                        i += 2;
                    } else if chars.get(i + 1).is_some_and(char::is_ascii_digit) {
                        let start = i;
                        i += 1;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                        let s: String = chars[start..i].iter().collect();
                        let n = s.parse().map_err(|_| {
                            Error::parse(line, col, format!("integer {s} out of range"))
                        })?;
                        toks.push((Tok::Int(n), col));
                    } else {
                        return Err(Error::parse(line, col, "unexpected '-'"));
                    }
                }
                '"' => {
                    let mut s = String::new();
                    i += 1;
                    loop {
                        match chars.get(i) {
                            None => {
                                return Err(Error::parse(line, col, "unterminated string literal"))
                            }
                            Some('"') => {
                                i += 1;
                                break;
                            }
                            Some('\\') => match chars.get(i + 1) {
                                Some('"') => {
                                    s.push('"');
                                    i += 2;
                                }
                                Some('\\') => {
                                    s.push('\\');
                                    i += 2;
                                }
                                _ => {
                                    return Err(Error::parse(
                                        line,
                                        col_offset + i + 1,
                                        "unknown escape; only \\\" and \\\\ are recognized",
                                    ))
                                }
                            },
                            Some(c) => {
                                s.push(*c);
                                i += 1;
                            }
                        }
                    }
                    toks.push((Tok::Str(s), col));
                }
                c if c.is_ascii_digit() => {
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let s: String = chars[start..i].iter().collect();
                    let n = s.parse().map_err(|_| {
                        Error::parse(line, col, format!("integer {s} out of range"))
                    })?;
                    toks.push((Tok::Int(n), col));
                }
                c if is_ident_start(c) => {
                    let start = i;
                    while i < chars.len() && is_ident_continue(chars[i]) {
                        i += 1;
                    }
                    toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
                }
                c => {
                    return Err(Error::parse(line, col, format!("unexpected character '{c}'")))
                }
            }
        }
        Ok(Lexer {
            toks,
            pos: 0,
            line,
            end_col: col_offset + chars.len() + 1,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.end_col)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<()> {
        let col = self.col();
        match self.next() {
            Some(t) if t == *want => Ok(()),
            Some(t) => Err(Error::parse(
                self.line,
                col,
                format!("expected {}, found {}", want.describe(), t.describe()),
            )),
            None => Err(Error::parse(
                self.line,
                col,
                format!("expected {}, found end of line", want.describe()),
            )),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String> {
        let col = self.col();
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => Err(Error::parse(
                self.line,
                col,
                format!("expected {what}, found {}", t.describe()),
            )),
            None => Err(Error::parse(
                self.line,
                col,
                format!("expected {what}, found end of line"),
            )),
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        if let Some(t) = self.peek() {
            return Err(Error::parse(
                self.line,
                self.col(),
                format!("unexpected {} after a complete statement", t.describe()),
            ));
        }
        Ok(())
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col(), msg.into())
    }
}

/// Strips a `#` comment, respecting string literals.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (idx, c) in line.char_indices() {
        match c {
            '\\' if in_str && !escaped => escaped = true,
            '"' if !escaped => {
                in_str = !in_str;
                escaped = false;
            }
            '#' if !in_str => return &line[..idx],
            _ => escaped = false,
        }
    }
    line
}

/// Splits `key: rest` for known line keys; returns the rest plus the
/// column offset where it starts.
fn split_key<'a>(line: &'a str, key: &str) -> Option<(&'a str, usize)> {
    let prefix = format!("{key}:");
    let rest = line.strip_prefix(&prefix)?;
    Some((rest, prefix.len()))
}

// ---------------------------------------------------------------------
// Term / atom / constraint parsing

fn parse_term(lx: &mut Lexer) -> Result<Term> {
    let col = lx.col();
    match lx.next() {
        Some(Tok::Ident(name)) => {
            if lx.peek() == Some(&Tok::LParen) {
                lx.next();
                let mut args = Vec::new();
                if lx.peek() == Some(&Tok::RParen) {
                    return Err(lx.err(format!("function {name} applied to no arguments")));
                }
                loop {
                    args.push(parse_term(lx)?);
                    match lx.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RParen) => break,
                        _ => {
                            return Err(Error::parse(
                                lx.line,
                                lx.col(),
                                "expected ',' or ')' in argument list",
                            ))
                        }
                    }
                }
                Ok(Term::App(name, args))
            } else if is_null_token(&name) {
                Err(Error::parse(
                    lx.line,
                    col,
                    format!("null {name} is not allowed in constraints or queries"),
                ))
            } else {
                Ok(Term::Var(name))
            }
        }
        Some(Tok::Int(n)) => Ok(Term::Const(Constant::Int(n))),
        Some(Tok::Str(s)) => Ok(Term::Const(Constant::Str(s))),
        Some(t) => Err(Error::parse(
            lx.line,
            col,
            format!("expected a term, found {}", t.describe()),
        )),
        None => Err(Error::parse(lx.line, col, "expected a term, found end of line")),
    }
}

fn is_null_token(s: &str) -> bool {
    s.strip_prefix("_N")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// An item on either side of `->`: a relational atom or a term equality.
enum BodyItem {
    Atom(Atom),
    Equality(Term, Term),
}

fn parse_body_item(lx: &mut Lexer) -> Result<BodyItem> {
    let col = lx.col();
    let t = parse_term(lx)?;
    if lx.peek() == Some(&Tok::Eq) {
        lx.next();
        let rhs = parse_term(lx)?;
        return Ok(BodyItem::Equality(t, rhs));
    }
    match t {
        Term::App(rel, args) => Ok(BodyItem::Atom(Atom { relation: rel, args })),
        other => Err(Error::parse(
            lx.line,
            col,
            format!("expected an atom or equality, found bare term {other}"),
        )),
    }
}

fn parse_items_until_arrow(lx: &mut Lexer) -> Result<Vec<BodyItem>> {
    let mut items = vec![parse_body_item(lx)?];
    loop {
        match lx.peek() {
            Some(Tok::Amp) => {
                lx.next();
                items.push(parse_body_item(lx)?);
            }
            Some(Tok::Arrow) => {
                lx.next();
                return Ok(items);
            }
            _ => return Err(lx.err("expected '&' or '->'")),
        }
    }
}

fn items_into_atoms(items: Vec<BodyItem>, lx: &Lexer, what: &str) -> Result<Vec<Atom>> {
    items
        .into_iter()
        .map(|it| match it {
            BodyItem::Atom(a) => Ok(a),
            BodyItem::Equality(l, r) => Err(Error::parse(
                lx.line,
                1,
                format!("{what} does not allow the equality {l} = {r} here"),
            )),
        })
        .collect()
}

fn parse_head_atoms(lx: &mut Lexer) -> Result<Vec<Atom>> {
    let mut atoms = Vec::new();
    loop {
        match parse_body_item(lx)? {
            BodyItem::Atom(a) => atoms.push(a),
            BodyItem::Equality(l, r) => {
                return Err(lx.err(format!("unexpected equality {l} = {r} in a tgd head")))
            }
        }
        match lx.peek() {
            Some(Tok::Amp) => {
                lx.next();
            }
            None => return Ok(atoms),
            _ => return Err(lx.err("expected '&' or end of line in head")),
        }
    }
}

fn parse_tgd_line(lx: &mut Lexer) -> Result<Tgd> {
    let items = parse_items_until_arrow(lx)?;
    let body = items_into_atoms(items, lx, "a first-order dependency")?;
    let head = parse_head_atoms(lx)?;
    lx.expect_end()?;
    Ok(Tgd::new(body, head))
}

fn parse_so_line(lx: &mut Lexer) -> Result<SoClause> {
    let items = parse_items_until_arrow(lx)?;
    let mut body = Vec::new();
    let mut equalities = Vec::new();
    for it in items {
        match it {
            BodyItem::Atom(a) => body.push(a),
            BodyItem::Equality(l, r) => equalities.push((l, r)),
        }
    }
    let head = parse_head_atoms(lx)?;
    lx.expect_end()?;
    Ok(SoClause::new(body, equalities, head))
}

fn parse_egd_line(lx: &mut Lexer) -> Result<Egd> {
    let items = parse_items_until_arrow(lx)?;
    let body = items_into_atoms(items, lx, "an egd body")?;
    let lcol = lx.col();
    let left = match parse_term(lx)? {
        Term::Var(v) => v,
        other => {
            return Err(Error::parse(
                lx.line,
                lcol,
                format!("egd head must equate variables, found {other}"),
            ))
        }
    };
    lx.expect(&Tok::Eq)?;
    let rcol = lx.col();
    let right = match parse_term(lx)? {
        Term::Var(v) => v,
        other => {
            return Err(Error::parse(
                lx.line,
                rcol,
                format!("egd head must equate variables, found {other}"),
            ))
        }
    };
    lx.expect_end()?;
    Ok(Egd::new(body, left, right))
}

/// Parses `Name/arity` entries separated by `;` into a schema fragment.
fn parse_schema_entries(lx: &mut Lexer, schema: &mut Schema) -> Result<()> {
    loop {
        let name = lx.expect_ident("relation name")?;
        lx.expect(&Tok::Slash)?;
        let col = lx.col();
        let arity = match lx.next() {
            Some(Tok::Int(n)) if n >= 0 => n as usize,
            Some(t) => {
                return Err(Error::parse(
                    lx.line,
                    col,
                    format!("expected arity, found {}", t.describe()),
                ))
            }
            None => return Err(Error::parse(lx.line, col, "expected arity")),
        };
        schema
            .declare(name, arity)
            .map_err(|e| Error::parse(lx.line, col, e.to_string()))?;
        match lx.next() {
            Some(Tok::Semi) => continue,
            None => return Ok(()),
            Some(t) => {
                return Err(Error::parse(
                    lx.line,
                    lx.col(),
                    format!("expected ';' or end of line, found {}", t.describe()),
                ))
            }
        }
    }
}

fn parse_function_entries(lx: &mut Lexer, functions: &mut IndexMap<String, usize>) -> Result<()> {
    loop {
        let name = lx.expect_ident("function name")?;
        lx.expect(&Tok::Slash)?;
        let col = lx.col();
        let arity = match lx.next() {
            Some(Tok::Int(n)) if n >= 1 => n as usize,
            Some(Tok::Int(n)) => {
                return Err(Error::parse(
                    lx.line,
                    col,
                    format!("function arity must be at least 1, found {n}"),
                ))
            }
            Some(t) => {
                return Err(Error::parse(
                    lx.line,
                    col,
                    format!("expected arity, found {}", t.describe()),
                ))
            }
            None => return Err(Error::parse(lx.line, col, "expected arity")),
        };
        if let Some(&prev) = functions.get(&name) {
            if prev != arity {
                return Err(Error::parse(
                    lx.line,
                    col,
                    format!("function {name} redeclared with arity {arity}, was {prev}"),
                ));
            }
        } else {
            functions.insert(name, arity);
        }
        match lx.next() {
            Some(Tok::Semi) => continue,
            None => return Ok(()),
            Some(t) => {
                return Err(Error::parse(
                    lx.line,
                    lx.col(),
                    format!("expected ';' or end of line, found {}", t.describe()),
                ))
            }
        }
    }
}

// ---------------------------------------------------------------------
// Mapping files

pub fn parse_mapping(text: &str) -> Result<SchemaMapping> {
    let mut source = Schema::new();
    let mut target = Schema::new();
    let mut functions = IndexMap::new();
    let mut st = Vec::new();
    let mut t = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - trimmed.len();
        let at = |rest: &str, off: usize| Lexer::new(rest, lineno, indent + off);

        if let Some((rest, off)) = split_key(trimmed, "source") {
            parse_schema_entries(&mut at(rest, off)?, &mut source)?;
        } else if let Some((rest, off)) = split_key(trimmed, "target") {
            parse_schema_entries(&mut at(rest, off)?, &mut target)?;
        } else if let Some((rest, off)) = split_key(trimmed, "function") {
            parse_function_entries(&mut at(rest, off)?, &mut functions)?;
        } else if let Some((rest, off)) = split_key(trimmed, "st-tgd") {
            st.push(StConstraint::Tgd(parse_tgd_line(&mut at(rest, off)?)?));
        } else if let Some((rest, off)) = split_key(trimmed, "st-so") {
            st.push(StConstraint::So(parse_so_line(&mut at(rest, off)?)?));
        } else if let Some((rest, off)) = split_key(trimmed, "t-tgd") {
            t.push(TargetConstraint::Tgd(parse_tgd_line(&mut at(rest, off)?)?));
        } else if let Some((rest, off)) = split_key(trimmed, "t-so") {
            t.push(TargetConstraint::So(parse_so_line(&mut at(rest, off)?)?));
        } else if let Some((rest, off)) = split_key(trimmed, "t-egd") {
            t.push(TargetConstraint::Egd(parse_egd_line(&mut at(rest, off)?)?));
        } else {
            return Err(Error::parse(
                lineno,
                indent + 1,
                format!(
                    "unknown line; expected source:, target:, function:, st-tgd:, st-so:, t-tgd:, t-so:, or t-egd:, found {}",
                    trimmed.split(':').next().unwrap_or(trimmed)
                ),
            ));
        }
    }
    SchemaMapping::new(source, target, functions, st, t)
}

fn schema_line(key: &str, schema: &Schema) -> String {
    let entries: Vec<String> = schema.iter().map(|(n, a)| format!("{n}/{a}")).collect();
    format!("{key}: {}", entries.join("; "))
}

pub fn serialize_mapping(m: &SchemaMapping) -> String {
    let mut out = String::new();
    out.push_str(&schema_line("source", &m.source));
    out.push('\n');
    out.push_str(&schema_line("target", &m.target));
    out.push('\n');
    if !m.functions.is_empty() {
        let entries: Vec<String> = m.functions.iter().map(|(n, a)| format!("{n}/{a}")).collect();
        out.push_str(&format!("function: {}\n", entries.join("; ")));
    }
    for c in &m.st {
        match c {
            StConstraint::Tgd(tgd) => out.push_str(&format!("st-tgd: {tgd}\n")),
            StConstraint::So(cl) => out.push_str(&format!("st-so: {cl}\n")),
        }
    }
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(tgd) => out.push_str(&format!("t-tgd: {tgd}\n")),
            TargetConstraint::So(cl) => out.push_str(&format!("t-so: {cl}\n")),
            TargetConstraint::Egd(egd) => out.push_str(&format!("t-egd: {egd}\n")),
        }
    }
    out
}

// ---------------------------------------------------------------------
// Instance files

fn parse_value(lx: &mut Lexer, mode: InstanceMode) -> Result<Value> {
    let col = lx.col();
    match lx.next() {
        Some(Tok::Str(s)) => Ok(Value::Const(Constant::Str(s))),
        Some(Tok::Int(n)) => Ok(Value::Const(Constant::Int(n))),
        Some(Tok::Ident(name)) => {
            if lx.peek() == Some(&Tok::LParen) {
                if mode == InstanceMode::Source {
                    return Err(Error::parse(
                        lx.line,
                        col,
                        format!("functional value {name}(...) is not allowed in a source instance"),
                    ));
                }
                lx.next();
                let mut args = Vec::new();
                loop {
                    args.push(parse_value(lx, mode)?);
                    match lx.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RParen) => break,
                        _ => {
                            return Err(Error::parse(
                                lx.line,
                                lx.col(),
                                "expected ',' or ')' in argument list",
                            ))
                        }
                    }
                }
                Ok(Value::Compound(name, args))
            } else if let Some(id) = name
                .strip_prefix("_N")
                .and_then(|rest| rest.parse::<u64>().ok())
            {
                if mode == InstanceMode::Source {
                    return Err(Error::parse(
                        lx.line,
                        col,
                        format!("null {name} is not allowed in a source instance"),
                    ));
                }
                Ok(Value::Null(id))
            } else {
                Err(Error::parse(
                    lx.line,
                    col,
                    format!("bare identifier {name}; constants are quoted strings or integers"),
                ))
            }
        }
        Some(t) => Err(Error::parse(
            lx.line,
            col,
            format!("expected a value, found {}", t.describe()),
        )),
        None => Err(Error::parse(lx.line, col, "expected a value")),
    }
}

/// Parses one fact per line, validating against `schema`.
pub fn parse_instance(text: &str, schema: &Schema, mode: InstanceMode) -> Result<Instance> {
    let mut inst = Instance::empty();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - trimmed.len();
        let mut lx = Lexer::new(trimmed, lineno, indent)?;
        let relcol = lx.col();
        let rel = lx.expect_ident("relation name")?;
        lx.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        if lx.peek() == Some(&Tok::RParen) {
            lx.next();
        } else {
            loop {
                args.push(parse_value(&mut lx, mode)?);
                match lx.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => {
                        return Err(Error::parse(
                            lineno,
                            lx.col(),
                            "expected ',' or ')' in fact arguments",
                        ))
                    }
                }
            }
        }
        lx.expect(&Tok::Period)?;
        lx.expect_end()?;
        match schema.arity(&rel) {
            None => {
                return Err(Error::parse(
                    lineno,
                    relcol,
                    format!("unknown relation {rel}"),
                ))
            }
            Some(n) if n != args.len() => {
                return Err(Error::parse(
                    lineno,
                    relcol,
                    format!("relation {rel} has arity {n}, found {} arguments", args.len()),
                ))
            }
            Some(_) => inst.insert(Fact::new(rel, args)),
        }
    }
    Ok(inst)
}

pub fn serialize_instance(inst: &Instance) -> String {
    let mut out = String::new();
    for fact in inst.facts() {
        out.push_str(&fact.to_string());
        out.push_str(".\n");
    }
    out
}

// ---------------------------------------------------------------------
// Query files

/// Parses query lines. Lines sharing a head name form one union; unions
/// are returned in first-appearance order.
pub fn parse_queries(text: &str) -> Result<Vec<Ucq>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: IndexMap<String, (usize, Vec<Cq>)> = IndexMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - trimmed.len();
        let Some(rest) = trimmed.strip_prefix("query") else {
            return Err(Error::parse(
                lineno,
                indent + 1,
                "expected a line of the form: query name(args) :- atoms",
            ));
        };
        if !rest.starts_with([' ', '\t']) {
            return Err(Error::parse(lineno, indent + 6, "expected whitespace after 'query'"));
        }
        let mut lx = Lexer::new(rest, lineno, indent + 5)?;
        let name = lx.expect_ident("query name")?;
        lx.expect(&Tok::LParen)?;
        let mut head = Vec::new();
        if lx.peek() == Some(&Tok::RParen) {
            lx.next();
        } else {
            loop {
                let col = lx.col();
                let term = parse_term(&mut lx)?;
                if matches!(term, Term::App(_, _)) {
                    return Err(Error::parse(
                        lineno,
                        col,
                        "query heads contain variables and constants only",
                    ));
                }
                head.push(term);
                match lx.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => {
                        return Err(Error::parse(
                            lineno,
                            lx.col(),
                            "expected ',' or ')' in query head",
                        ))
                    }
                }
            }
        }
        lx.expect(&Tok::QueryIf)?;
        let mut body = Vec::new();
        loop {
            match parse_body_item(&mut lx)? {
                BodyItem::Atom(a) => body.push(a),
                BodyItem::Equality(l, r) => {
                    return Err(lx.err(format!("unexpected equality {l} = {r} in a query body")))
                }
            }
            match lx.peek() {
                Some(Tok::Amp) => {
                    lx.next();
                }
                None => break,
                _ => return Err(lx.err("expected '&' or end of line in query body")),
            }
        }
        let head_vars: BTreeSet<String> = {
            let mut vs = Vec::new();
            head.iter().for_each(|t| t.collect_vars(&mut vs));
            vs.into_iter().collect()
        };
        let body_vars: BTreeSet<String> = atoms_vars(&body).into_iter().collect();
        if let Some(v) = head_vars.iter().find(|v| !body_vars.contains(*v)) {
            return Err(Error::parse(
                lineno,
                indent + 1,
                format!("head variable {v} does not occur in the body"),
            ));
        }
        let arity = head.len();
        match groups.get_mut(&name) {
            None => {
                order.push(name.clone());
                groups.insert(name, (arity, vec![Cq::new(head, body)]));
            }
            Some((a, cqs)) => {
                if *a != arity {
                    return Err(Error::parse(
                        lineno,
                        indent + 1,
                        format!("query {name} redeclared with arity {arity}, was {a}"),
                    ));
                }
                cqs.push(Cq::new(head, body));
            }
        }
    }
    order
        .into_iter()
        .map(|name| {
            let (arity, cqs) = groups.shift_remove(&name).expect("group recorded");
            Ucq::new(name, arity, cqs)
        })
        .collect()
}

/// Parses a file expected to define exactly one union query.
pub fn parse_query(text: &str) -> Result<Ucq> {
    let mut qs = parse_queries(text)?;
    match qs.len() {
        0 => Err(Error::parse(1, 1, "no query lines found")),
        1 => Ok(qs.remove(0)),
        n => Err(Error::Schema(format!(
            "expected one query, found {n}: {}",
            qs.iter().map(|q| q.name.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn serialize_query(q: &Ucq) -> String {
    let mut s = q.to_string();
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------
// Source constraint fragments (schema + egds), the output of rewriting

/// Parses a source-side constraint fragment: `source:` declarations and
/// `egd:` lines over that schema.
pub fn parse_constraint_fragment(text: &str) -> Result<(Schema, Vec<Egd>)> {
    let mut schema = Schema::new();
    let mut egds = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - trimmed.len();
        if let Some((rest, off)) = split_key(trimmed, "source") {
            let mut lx = Lexer::new(rest, lineno, indent + off)?;
            parse_schema_entries(&mut lx, &mut schema)?;
        } else if let Some((rest, off)) = split_key(trimmed, "egd") {
            let mut lx = Lexer::new(rest, lineno, indent + off)?;
            egds.push(parse_egd_line(&mut lx)?);
        } else {
            return Err(Error::parse(
                lineno,
                indent + 1,
                "unknown line; expected source: or egd:",
            ));
        }
    }
    for egd in &egds {
        for a in &egd.body {
            match schema.arity(&a.relation) {
                None => {
                    return Err(Error::Schema(format!(
                        "egd {egd} uses undeclared relation {}",
                        a.relation
                    )))
                }
                Some(n) if n != a.args.len() => {
                    return Err(Error::Schema(format!(
                        "egd {egd}: atom {a} has {} arguments but {} has arity {n}",
                        a.args.len(),
                        a.relation
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok((schema, egds))
}

pub fn serialize_constraint_fragment(schema: &Schema, egds: &[Egd]) -> String {
    let mut out = String::new();
    out.push_str(&schema_line("source", schema));
    out.push('\n');
    for egd in egds {
        out.push_str(&format!("egd: {egd}\n"));
    }
    out
}

// ---------------------------------------------------------------------
// JSON rendering

/// Values render as JSON strings or numbers; nulls and compounds use
/// their display form (`_N3`, `f("a", 2)`).
pub fn value_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Const(Constant::Int(n)) => serde_json::Value::from(*n),
        Value::Const(Constant::Str(s)) => serde_json::Value::from(s.as_str()),
        other => serde_json::Value::from(other.to_string()),
    }
}

/// Answer sets render as a sorted JSON array of tuples.
pub fn answers_to_json(answers: &BTreeSet<Vec<Value>>) -> serde_json::Value {
    serde_json::Value::Array(
        answers
            .iter()
            .map(|tuple| serde_json::Value::Array(tuple.iter().map(value_to_json).collect()))
            .collect(),
    )
}
