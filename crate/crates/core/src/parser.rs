//! Concrete syntax for formulas, terms, signatures, rule files and model
//! dumps. All formats share one tokenizer; `#` starts a comment.

use std::fmt;

use thiserror::Error;

use crate::simplify::RewriteRule;
use crate::syntax::{
    check_closed_and_typed_fo3, check_well_typed_ra, Formula, Mode, Pred, RaExpr, Signature, Sort,
    Var, Violation,
};

/// Deepest nesting accepted before the parser gives up, so hostile input
/// cannot exhaust the stack.
const MAX_DEPTH: usize = 200;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct SourceError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl SourceError {
    fn new(pos: Pos, message: impl Into<String>) -> Self {
        SourceError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    /// The error followed by the offending source line and a caret under
    /// the reported column.
    pub fn render(&self, source: &str) -> String {
        let mut out = format!("{self}\n");
        if let Some(text) = source.lines().nth(self.line.saturating_sub(1)) {
            let gutter = self.line.to_string();
            out.push_str(&format!("{gutter} | {text}\n"));
            let pad = " ".repeat(gutter.len() + 3 + self.column.saturating_sub(1));
            out.push_str(&format!("{pad}^\n"));
        }
        out
    }
}

impl fmt::Display for SourceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        match self.expected.as_slice() {
            [] => Ok(()),
            [one] => write!(f, " (expected {one})"),
            many => write!(f, " (expected one of {})", many.join(", ")),
        }
    }
}

/// A syntax error, or a well-formed input that fails the typing checks.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SourceError),
    #[error("{}", render_violations(.0))]
    Typing(Vec<Violation>),
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Number(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    Amp,
    Pipe,
    Tilde,
    Semi,
    Plus,
    Caret,
    Eq,
    Arrow,
    DoubleArrow,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("`{n}`"),
            Tok::Newline => "end of line".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Tilde => "~",
            Tok::Semi => ";",
            Tok::Plus => "+",
            Tok::Caret => "^",
            Tok::Eq => "=",
            Tok::Arrow => "->",
            Tok::DoubleArrow => "=>",
            _ => "",
        }
    }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<(Tok, Pos)>, SourceError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1, 1);
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        let mut advance = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            column += 1;
            c
        };
        match c {
            '\n' => {
                chars.next();
                out.push((Tok::Newline, pos));
                line += 1;
                column = 1;
                continue;
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    advance(&mut chars);
                }
                continue;
            }
            c if c.is_whitespace() => {
                advance(&mut chars);
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        advance(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(ident), pos));
                continue;
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        digits.push(c);
                        advance(&mut chars);
                    } else {
                        break;
                    }
                }
                let n = digits
                    .parse()
                    .map_err(|_| SourceError::new(pos, "number out of range"))?;
                out.push((Tok::Number(n), pos));
                continue;
            }
            _ => {}
        }
        advance(&mut chars);
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '~' => Tok::Tilde,
            ';' => Tok::Semi,
            '+' => Tok::Plus,
            '^' => Tok::Caret,
            '=' if chars.peek() == Some(&'>') => {
                chars.next();
                column += 1;
                Tok::DoubleArrow
            }
            '=' => Tok::Eq,
            '-' if chars.peek() == Some(&'>') => {
                chars.next();
                column += 1;
                Tok::Arrow
            }
            other => {
                return Err(SourceError::new(
                    pos,
                    format!("unexpected character `{other}`"),
                ));
            }
        };
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, column }));
    Ok(out)
}

const KEYWORDS: [&str; 7] = ["exists", "forall", "true", "false", "top", "bot", "id"];

pub(crate) struct Parser<'a> {
    toks: &'a [(Tok, Pos)],
    at: usize,
    depth: usize,
    skip_newlines: bool,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(toks: &'a [(Tok, Pos)], skip_newlines: bool) -> Self {
        let mut p = Parser {
            toks,
            at: 0,
            depth: 0,
            skip_newlines,
        };
        p.skip();
        p
    }

    fn skip(&mut self) {
        if self.skip_newlines {
            while self.toks[self.at].0 == Tok::Newline {
                self.at += 1;
            }
        }
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        let mut i = self.at + 1;
        while self.skip_newlines && i < self.toks.len() && self.toks[i].0 == Tok::Newline {
            i += 1;
        }
        &self.toks[i.min(self.toks.len() - 1)].0
    }

    pub(crate) fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let tok = self.toks[self.at].0.clone();
        if tok != Tok::Eof {
            self.at += 1;
            self.skip();
        }
        tok
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn unexpected(&self, expected: &[&str]) -> SourceError {
        SourceError {
            line: self.pos().line,
            column: self.pos().column,
            message: format!("unexpected {}", self.peek().describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub(crate) fn expect(&mut self, tok: &Tok) -> Result<(), SourceError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("`{}`", tok.symbol())]))
        }
    }

    pub(crate) fn ident(&mut self, what: &str) -> Result<(String, Pos), SourceError> {
        let pos = self.pos();
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    pub(crate) fn number(&mut self) -> Result<u64, SourceError> {
        match *self.peek() {
            Tok::Number(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected(&["a number"])),
        }
    }

    fn name(&mut self, what: &str) -> Result<(String, Pos), SourceError> {
        let (s, pos) = self.ident(what)?;
        if KEYWORDS.contains(&s.as_str()) {
            return Err(SourceError {
                line: pos.line,
                column: pos.column,
                message: format!("`{s}` is a keyword"),
                expected: vec![what.to_string()],
            });
        }
        Ok((s, pos))
    }

    fn enter(&mut self) -> Result<(), SourceError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SourceError::new(self.pos(), "nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    pub(crate) fn at_end(&self) -> bool {
        matches!(self.peek(), Tok::Eof | Tok::Newline)
    }

    fn finish(&self) -> Result<(), SourceError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected(&["end of input"]))
        }
    }
}

fn sort_for_mode(mode: Mode, name: &str, pos: Pos) -> Result<Sort, SourceError> {
    if mode == Mode::Homogeneous && name != crate::syntax::UNIVERSAL_SORT {
        return Err(SourceError::new(
            pos,
            format!("sort `{name}` is not allowed in homogeneous mode"),
        ));
    }
    Ok(Sort::new(name))
}

struct Fo3Parser<'a, 'b> {
    p: &'b mut Parser<'a>,
    mode: Mode,
}

impl Fo3Parser<'_, '_> {
    fn formula(&mut self) -> Result<Formula, SourceError> {
        self.p.enter()?;
        let result = match self.p.peek() {
            Tok::Ident(kw) if kw == "exists" || kw == "forall" => self.quantified(),
            _ => self.disjunction(),
        };
        self.p.leave();
        result
    }

    fn quantified(&mut self) -> Result<Formula, SourceError> {
        let (kw, _) = self.p.ident("a quantifier")?;
        let (var, _) = self.p.name("a variable")?;
        let sort = if self.p.eat(&Tok::Colon) {
            let (name, pos) = self.p.name("a sort")?;
            sort_for_mode(self.mode, &name, pos)?
        } else {
            Sort::universal()
        };
        self.p.expect(&Tok::Dot)?;
        let body = Box::new(self.formula()?);
        let var = Var::new(&var);
        Ok(if kw == "exists" {
            Formula::Exists(var, sort, body)
        } else {
            Formula::Forall(var, sort, body)
        })
    }

    fn disjunction(&mut self) -> Result<Formula, SourceError> {
        let mut lhs = self.conjunction()?;
        while self.p.eat(&Tok::Pipe) {
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, SourceError> {
        let mut lhs = self.negation()?;
        while self.p.eat(&Tok::Amp) {
            lhs = Formula::and(lhs, self.negation()?);
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> Result<Formula, SourceError> {
        if self.p.eat(&Tok::Tilde) {
            self.p.enter()?;
            let body = self.negation();
            self.p.leave();
            return Ok(Formula::not(body?));
        }
        match self.p.peek() {
            // Accepted here too so `a(x,y) & exists z. b(y,z)` parses.
            Tok::Ident(kw) if kw == "exists" || kw == "forall" => self.formula(),
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, SourceError> {
        if self.p.eat(&Tok::LParen) {
            let inner = self.formula()?;
            self.p.expect(&Tok::RParen)?;
            return Ok(inner);
        }
        let expected = [
            "a predicate",
            "a variable",
            "`true`",
            "`false`",
            "`(`",
            "`~`",
        ];
        match self.p.peek().clone() {
            Tok::Ident(s) if s == "true" => {
                self.p.bump();
                Ok(Formula::True)
            }
            Tok::Ident(s) if s == "false" => {
                self.p.bump();
                Ok(Formula::False)
            }
            Tok::Ident(_) => match self.p.peek2() {
                Tok::LParen => {
                    let (pred, _) = self.p.name("a predicate")?;
                    self.p.expect(&Tok::LParen)?;
                    let (x, _) = self.p.name("a variable")?;
                    self.p.expect(&Tok::Comma)?;
                    let (y, _) = self.p.name("a variable")?;
                    self.p.expect(&Tok::RParen)?;
                    Ok(Formula::atom(&pred, &x, &y))
                }
                Tok::Eq => {
                    let (x, _) = self.p.name("a variable")?;
                    self.p.bump();
                    let (y, _) = self.p.name("a variable")?;
                    Ok(Formula::equals(&x, &y))
                }
                _ => {
                    self.p.bump();
                    Err(self.p.unexpected(&["`(`", "`=`"]))
                }
            },
            _ => Err(self.p.unexpected(&expected)),
        }
    }
}

struct RaParser<'a, 'b, 'c> {
    p: &'b mut Parser<'a>,
    sig: &'c Signature,
    mode: Mode,
}

impl RaParser<'_, '_, '_> {
    fn expr(&mut self) -> Result<RaExpr, SourceError> {
        self.p.enter()?;
        let result = self.union();
        self.p.leave();
        result
    }

    fn union(&mut self) -> Result<RaExpr, SourceError> {
        let mut lhs = self.inter()?;
        while self.p.eat(&Tok::Pipe) {
            lhs = RaExpr::union(lhs, self.inter()?);
        }
        Ok(lhs)
    }

    fn inter(&mut self) -> Result<RaExpr, SourceError> {
        let mut lhs = self.dagger()?;
        while self.p.eat(&Tok::Amp) {
            lhs = RaExpr::intersection(lhs, self.dagger()?);
        }
        Ok(lhs)
    }

    fn dagger(&mut self) -> Result<RaExpr, SourceError> {
        let mut lhs = self.compose()?;
        while self.p.eat(&Tok::Plus) {
            lhs = RaExpr::dagger(lhs, self.compose()?);
        }
        Ok(lhs)
    }

    fn compose(&mut self) -> Result<RaExpr, SourceError> {
        let mut lhs = self.unary()?;
        while self.p.eat(&Tok::Semi) {
            lhs = RaExpr::compose(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RaExpr, SourceError> {
        if self.p.eat(&Tok::Tilde) {
            self.p.enter()?;
            let body = self.unary();
            self.p.leave();
            return Ok(RaExpr::complement(body?));
        }
        let mut e = self.primary()?;
        while self.p.eat(&Tok::Caret) {
            e = RaExpr::converse(e);
        }
        Ok(e)
    }

    fn sort(&mut self) -> Result<Sort, SourceError> {
        let (name, pos) = self.p.name("a sort")?;
        sort_for_mode(self.mode, &name, pos)
    }

    fn sort_pair(&mut self) -> Result<Option<(Sort, Sort)>, SourceError> {
        if !self.p.eat(&Tok::LBracket) {
            return Ok(None);
        }
        let s = self.sort()?;
        self.p.expect(&Tok::Comma)?;
        let t = self.sort()?;
        self.p.expect(&Tok::RBracket)?;
        Ok(Some((s, t)))
    }

    fn primary(&mut self) -> Result<RaExpr, SourceError> {
        if self.p.eat(&Tok::LParen) {
            let inner = self.expr()?;
            self.p.expect(&Tok::RParen)?;
            return Ok(inner);
        }
        let universal = || (Sort::universal(), Sort::universal());
        let (name, pos) = self.p.ident("a relation")?;
        match name.as_str() {
            "top" | "bot" => {
                let (s, t) = self.sort_pair()?.unwrap_or_else(universal);
                Ok(if name == "top" {
                    RaExpr::Top(s, t)
                } else {
                    RaExpr::Bot(s, t)
                })
            }
            "id" => {
                if !self.p.eat(&Tok::LBracket) {
                    return Ok(RaExpr::Id(Sort::universal(), Sort::universal()));
                }
                let s = self.sort()?;
                let t = if self.p.eat(&Tok::Comma) {
                    self.sort()?
                } else {
                    s.clone()
                };
                self.p.expect(&Tok::RBracket)?;
                Ok(RaExpr::Id(s, t))
            }
            kw if KEYWORDS.contains(&kw) => Err(SourceError {
                line: pos.line,
                column: pos.column,
                message: format!("`{kw}` cannot appear in a relation term"),
                expected: vec!["a relation".to_string()],
            }),
            _ => {
                let pred = Pred::new(&name);
                let (s, t) = match self.sort_pair()? {
                    Some(ty) => ty,
                    None => self.sig.predicate_type(&pred).ok_or_else(|| {
                        SourceError::new(
                            pos,
                            format!("`{name}` needs a `[sort,sort]` annotation or a declaration"),
                        )
                    })?,
                };
                Ok(RaExpr::Atom(pred, s, t))
            }
        }
    }
}

/// Parses a first-order formula. A quantifier without `:sort` binds at `U`.
pub fn parse_fo3(text: &str, mode: Mode) -> Result<Formula, SourceError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks, true);
    let f = Fo3Parser { p: &mut p, mode }.formula()?;
    p.finish()?;
    Ok(f)
}

/// [`parse_fo3`] followed by the closedness and typing checks.
pub fn parse_fo3_checked(text: &str, sig: &Signature, mode: Mode) -> Result<Formula, ParseError> {
    let f = parse_fo3(text, mode)?;
    let violations = check_closed_and_typed_fo3(&f, sig);
    if violations.is_empty() {
        Ok(f)
    } else {
        Err(ParseError::Typing(violations))
    }
}

/// Parses a relation term. Bare forms `top`, `bot`, `id` have type `(U, U)`;
/// a bare predicate takes its type from `sig`.
pub fn parse_ra(text: &str, sig: &Signature, mode: Mode) -> Result<RaExpr, SourceError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks, true);
    let e = RaParser {
        p: &mut p,
        sig,
        mode,
    }
    .expr()?;
    p.finish()?;
    Ok(e)
}

/// [`parse_ra`] followed by the well-typedness check.
pub fn parse_ra_checked(text: &str, sig: &Signature, mode: Mode) -> Result<RaExpr, ParseError> {
    let e = parse_ra(text, sig, mode)?;
    let violations = check_well_typed_ra(&e, sig);
    if violations.is_empty() {
        Ok(e)
    } else {
        Err(ParseError::Typing(violations))
    }
}

/// Reads `sort <name>` and `pred <name> : <sort> -> <sort>` lines. In
/// homogeneous mode the sort `U` is always present and undeclared
/// predicates are typed `(U, U)`.
pub fn parse_signature(text: &str, mode: Mode) -> Result<Signature, SourceError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks, false);
    let mut sig = Signature::for_mode(mode);
    loop {
        while p.eat(&Tok::Newline) {}
        if *p.peek() == Tok::Eof {
            break;
        }
        let (kw, pos) = p.ident("`sort` or `pred`")?;
        match kw.as_str() {
            "sort" => {
                let (name, pos) = p.ident("a sort name")?;
                let sort = sort_for_mode(mode, &name, pos)?;
                if mode == Mode::Homogeneous {
                    // `sort U` is harmless in homogeneous mode
                } else {
                    sig.add_sort(sort)
                        .map_err(|e| SourceError::new(pos, e.to_string()))?;
                }
            }
            "pred" => {
                let (name, pos) = p.ident("a predicate name")?;
                p.expect(&Tok::Colon)?;
                let (s, spos) = p.ident("a sort")?;
                p.expect(&Tok::Arrow)?;
                let (t, tpos) = p.ident("a sort")?;
                let s = sort_for_mode(mode, &s, spos)?;
                let t = sort_for_mode(mode, &t, tpos)?;
                let unknown = [(&s, spos), (&t, tpos)]
                    .into_iter()
                    .find(|(s, _)| !sig.has_sort(s));
                if let Some((s, at)) = unknown {
                    return Err(SourceError::new(at, format!("unknown sort `{s}`")));
                }
                sig.add_predicate(Pred::new(&name), s, t)
                    .map_err(|e| SourceError::new(pos, e.to_string()))?;
            }
            _ => {
                return Err(SourceError {
                    line: pos.line,
                    column: pos.column,
                    message: format!("unknown declaration `{kw}`"),
                    expected: vec!["`sort`".into(), "`pred`".into()],
                })
            }
        }
        if !p.at_end() {
            return Err(p.unexpected(&["end of line"]));
        }
    }
    Ok(sig)
}

/// Parses one rewrite pattern. Metavariables are single uppercase letters;
/// in heterogeneous mode every metavariable, `top` and `bot` carries a type
/// in sort variables.
pub fn parse_pattern(text: &str, mode: Mode) -> Result<RaExpr, SourceError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks, true);
    let e = pattern_in(&mut p, mode)?;
    p.finish()?;
    Ok(e)
}

fn pattern_in(p: &mut Parser, mode: Mode) -> Result<RaExpr, SourceError> {
    let start = p.pos();
    let sig = Signature::for_mode(mode);
    let e = RaParser { p, sig: &sig, mode }.expr()?;
    let mut bad = None;
    e.visit(&mut |node| {
        if let RaExpr::Atom(pred, _, _) = node {
            if !crate::simplify::is_metavariable(pred) && bad.is_none() {
                bad = Some(pred.clone());
            }
        }
    });
    if let Some(pred) = bad {
        return Err(SourceError::new(
            start,
            format!("`{pred}` is not a metavariable (use a single uppercase letter)"),
        ));
    }
    Ok(e)
}

/// Reads a rule file: one `LHS => RHS` per nonblank line. Each rule is
/// checked against the rewrite-rule invariants as it is read.
pub fn parse_rules(text: &str, mode: Mode) -> Result<Vec<RewriteRule>, SourceError> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks, false);
    let mut rules: Vec<RewriteRule> = Vec::new();
    loop {
        while p.eat(&Tok::Newline) {}
        if *p.peek() == Tok::Eof {
            break;
        }
        let start = p.pos();
        let lhs = pattern_in(&mut p, mode)?;
        p.expect(&Tok::DoubleArrow)?;
        let rhs = pattern_in(&mut p, mode)?;
        if !p.at_end() {
            return Err(p.unexpected(&["end of line"]));
        }
        let rule =
            RewriteRule::new(lhs, rhs, mode).map_err(|e| SourceError::new(start, e.to_string()))?;
        if rules.iter().any(|r| r.name == rule.name) {
            return Err(SourceError::new(
                start,
                format!("duplicate rule `{}`", rule.name),
            ));
        }
        rules.push(rule);
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hom_ra(s: &str) -> RaExpr {
        parse_ra(s, &Signature::homogeneous(), Mode::Homogeneous).unwrap()
    }

    #[test]
    fn precedence_of_relation_operators() {
        assert_eq!(
            parse_ra("~id[P] + bot[P,Q]", &Signature::new(), Mode::Heterogeneous).unwrap(),
            RaExpr::dagger(RaExpr::complement(RaExpr::id("P")), RaExpr::bot("P", "Q"))
        );
        assert_eq!(
            parse_ra("a[P,Q]^", &Signature::new(), Mode::Heterogeneous).unwrap(),
            RaExpr::converse(RaExpr::atom("a", "P", "Q"))
        );
        assert_eq!(
            hom_ra("a | b & c ; d + e"),
            RaExpr::union(
                RaExpr::hom("a"),
                RaExpr::intersection(
                    RaExpr::hom("b"),
                    RaExpr::dagger(
                        RaExpr::compose(RaExpr::hom("c"), RaExpr::hom("d")),
                        RaExpr::hom("e")
                    )
                )
            )
        );
        assert_eq!(
            hom_ra("a ; b ; c"),
            RaExpr::compose(
                RaExpr::compose(RaExpr::hom("a"), RaExpr::hom("b")),
                RaExpr::hom("c")
            )
        );
        assert_eq!(
            hom_ra("~a^"),
            RaExpr::complement(RaExpr::converse(RaExpr::hom("a")))
        );
    }

    #[test]
    fn worked_example_term_parses() {
        let e = hom_ra("top ; ((A & id) ; top)");
        assert_eq!(e.to_string(), "top ; ((A & id) ; top)");
        assert_eq!(e.size(), 7);
    }

    #[test]
    fn formulas_parse_with_quantifier_bodies_extending_right() {
        let f = parse_fo3(
            "~(forall x. forall y. ~A(x,x) | ~A(y,y))",
            Mode::Homogeneous,
        )
        .unwrap();
        let expected = Formula::not(Formula::forall(
            "x",
            "U",
            Formula::forall(
                "y",
                "U",
                Formula::or(
                    Formula::not(Formula::atom("A", "x", "x")),
                    Formula::not(Formula::atom("A", "y", "y")),
                ),
            ),
        ));
        assert_eq!(f, expected);
        assert_eq!(parse_fo3("true", Mode::Homogeneous).unwrap(), Formula::True);
        assert_eq!(
            parse_fo3("exists x:P. x = x", Mode::Heterogeneous).unwrap(),
            Formula::exists("x", "P", Formula::equals("x", "x"))
        );
    }

    #[test]
    fn homogeneous_mode_rejects_other_sorts() {
        assert!(parse_fo3("exists x:P. A(x,x)", Mode::Homogeneous).is_err());
        assert!(parse_ra("a[P,Q]", &Signature::homogeneous(), Mode::Homogeneous).is_err());
        assert!(parse_fo3("exists x:U. A(x,x)", Mode::Homogeneous).is_ok());
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_fo3("a(x,y", Mode::Homogeneous).unwrap_err();
        assert_eq!((err.line, err.column), (1, 6));
        assert_eq!(err.expected, vec!["`)`"]);
        let rendered = err.render("a(x,y");
        assert!(rendered.ends_with("1 | a(x,y\n         ^\n"), "{rendered}");

        let err = parse_ra("a ;\n  $", &Signature::homogeneous(), Mode::Homogeneous).unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let text = "(".repeat(100_000);
        assert!(parse_ra(&text, &Signature::homogeneous(), Mode::Homogeneous).is_err());
        let text = "~".repeat(100_000) + "a(x,x)";
        assert!(parse_fo3(&text, Mode::Homogeneous).is_err());
    }

    #[test]
    fn signatures() {
        let sig =
            parse_signature("sort P\npred A : P -> P # comment\n", Mode::Heterogeneous).unwrap();
        assert_eq!(
            sig.predicate_type(&Pred::new("A")),
            Some((Sort::new("P"), Sort::new("P")))
        );
        let err = parse_signature("pred A : P -> Q", Mode::Heterogeneous).unwrap_err();
        assert!(err.message.contains("unknown sort `P`"));
        let hom = parse_signature("", Mode::Homogeneous).unwrap();
        assert!(hom.has_sort(&Sort::universal()));
        assert_eq!(
            hom.predicate_type(&Pred::new("B")),
            Some((Sort::universal(), Sort::universal()))
        );
        assert!(parse_signature("sort P\nsort P", Mode::Heterogeneous).is_err());
    }

    #[test]
    fn bare_predicates_need_a_type_in_het_mode() {
        let mut sig = Signature::new();
        sig.add_sort(Sort::new("P")).unwrap();
        sig.add_predicate(Pred::new("a"), Sort::new("P"), Sort::new("P"))
            .unwrap();
        assert_eq!(
            parse_ra("a", &sig, Mode::Heterogeneous).unwrap(),
            RaExpr::atom("a", "P", "P")
        );
        assert!(parse_ra("b", &sig, Mode::Heterogeneous).is_err());
    }

    #[test]
    fn checked_parsing_reports_violations() {
        let sig = parse_signature("sort P\nsort Q\npred a : P -> Q", Mode::Heterogeneous).unwrap();
        match parse_ra_checked("a[Q,P]", &sig, Mode::Heterogeneous) {
            Err(ParseError::Typing(v)) => assert_eq!(v[0].condition(), Some(1)),
            other => panic!("{other:?}"),
        }
        assert!(parse_fo3_checked("a(x,y)", &sig, Mode::Heterogeneous).is_err());
    }

    #[test]
    fn rule_lines() {
        let rules = parse_rules(
            "# header\n(A | B) & B => B\nA | A => A\n",
            Mode::Homogeneous,
        )
        .unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].lhs.size(), 5);
        let het = parse_rules("id[P,P]^ => id[P,P]", Mode::Heterogeneous).unwrap();
        assert_eq!(het[0].rhs, RaExpr::id("P"));
        assert!(parse_rules("A => A | A", Mode::Homogeneous).is_err());
        assert!(parse_rules("A & A => C", Mode::Homogeneous).is_err());
        assert!(parse_rules("a & a => a", Mode::Homogeneous).is_err());
        assert!(parse_rules("A | A => A\nA | A => A", Mode::Homogeneous).is_err());
    }
}
