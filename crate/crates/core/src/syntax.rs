//! Abstract syntax for three-variable first-order formulas and relation
//! algebra terms, the signature they are typed against, and the typing
//! checks for both languages.
//!
//! Both ASTs are immutable trees. Names are reference counted so cloning a
//! subtree is cheap, which the rewriting and enumeration code relies on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

macro_rules! name_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(name: &str) -> Self {
                Self(Arc::from(name))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(name: &str) -> Self {
                Self::new(name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

name_type!(
    /// A sort (domain) name.
    Sort
);
name_type!(
    /// A first-order variable name.
    Var
);
name_type!(
    /// A binary predicate symbol, or a metavariable inside a rewrite pattern.
    Pred
);

pub const UNIVERSAL_SORT: &str = "U";

impl Sort {
    /// The single sort of the homogeneous language.
    pub fn universal() -> Self {
        Sort::new(UNIVERSAL_SORT)
    }

    pub fn is_universal(&self) -> bool {
        self.as_str() == UNIVERSAL_SORT
    }
}

/// Whether a formula or term is read over the single universal sort or over
/// declared sorts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Homogeneous => f.write_str("hom"),
            Mode::Heterogeneous => f.write_str("het"),
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("`{0}` is not a valid identifier")]
    BadName(String),
    #[error("sort `{0}` is declared twice")]
    DuplicateSort(Sort),
    #[error("predicate `{0}` is declared twice")]
    DuplicatePredicate(Pred),
    #[error("unknown sort `{0}`")]
    UnknownSort(Sort),
}

/// Declared sorts and the typing `d` of every predicate symbol.
///
/// A homogeneous signature holds the single sort `U`; predicates that were
/// never declared are implicitly typed `(U, U)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    sorts: BTreeSet<Sort>,
    predicates: BTreeMap<Pred, (Sort, Sort)>,
    implicit_universal: bool,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn homogeneous() -> Self {
        Signature {
            sorts: BTreeSet::from([Sort::universal()]),
            predicates: BTreeMap::new(),
            implicit_universal: true,
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Homogeneous => Self::homogeneous(),
            Mode::Heterogeneous => Self::new(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.implicit_universal
    }

    pub fn add_sort(&mut self, sort: Sort) -> Result<(), SignatureError> {
        if !is_identifier(sort.as_str()) {
            return Err(SignatureError::BadName(sort.to_string()));
        }
        if !self.sorts.insert(sort.clone()) {
            return Err(SignatureError::DuplicateSort(sort));
        }
        Ok(())
    }

    /// Adds `sort` unless it is already declared.
    pub fn ensure_sort(&mut self, sort: Sort) {
        self.sorts.insert(sort);
    }

    pub fn add_predicate(
        &mut self,
        pred: Pred,
        source: Sort,
        target: Sort,
    ) -> Result<(), SignatureError> {
        if !is_identifier(pred.as_str()) {
            return Err(SignatureError::BadName(pred.to_string()));
        }
        for sort in [&source, &target] {
            if !self.has_sort(sort) {
                return Err(SignatureError::UnknownSort(sort.clone()));
            }
        }
        if self.predicates.contains_key(&pred) {
            return Err(SignatureError::DuplicatePredicate(pred));
        }
        self.predicates.insert(pred, (source, target));
        Ok(())
    }

    pub fn has_sort(&self, sort: &Sort) -> bool {
        self.sorts.contains(sort)
    }

    /// The declared type of `pred`, or `(U, U)` for an undeclared predicate
    /// of a homogeneous signature.
    pub fn predicate_type(&self, pred: &Pred) -> Option<(Sort, Sort)> {
        match self.predicates.get(pred) {
            Some(ty) => Some(ty.clone()),
            None if self.implicit_universal => Some((Sort::universal(), Sort::universal())),
            None => None,
        }
    }

    pub fn sorts(&self) -> impl Iterator<Item = &Sort> {
        self.sorts.iter()
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&Pred, &(Sort, Sort))> {
        self.predicates.iter()
    }

    /// Builds a signature from the types written on the atoms of `exprs`.
    /// The first occurrence of a predicate fixes its type; later conflicting
    /// occurrences are left for [`check_well_typed_ra`] to report.
    pub fn infer_from_ra<'a>(exprs: impl IntoIterator<Item = &'a RaExpr>) -> Self {
        let mut sig = Signature::new();
        for expr in exprs {
            expr.visit(&mut |node| match node {
                RaExpr::Atom(p, s, t) => {
                    sig.sorts.insert(s.clone());
                    sig.sorts.insert(t.clone());
                    sig.predicates
                        .entry(p.clone())
                        .or_insert_with(|| (s.clone(), t.clone()));
                }
                RaExpr::Top(s, t) | RaExpr::Bot(s, t) | RaExpr::Id(s, t) => {
                    sig.sorts.insert(s.clone());
                    sig.sorts.insert(t.clone());
                }
                _ => {}
            });
        }
        sig
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for sort in &self.sorts {
            writeln!(f, "sort {sort}")?;
        }
        for (pred, (s, t)) in &self.predicates {
            writeln!(f, "pred {pred} : {s} -> {t}")?;
        }
        Ok(())
    }
}

/// A formula of first-order logic over binary predicates and equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(Pred, Var, Var),
    Equals(Var, Var),
    True,
    False,
    Or(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Exists(Var, Sort, Box<Formula>),
    Forall(Var, Sort, Box<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn atom(pred: &str, left: &str, right: &str) -> Self {
        Formula::Atom(Pred::new(pred), Var::new(left), Var::new(right))
    }

    pub fn equals(left: &str, right: &str) -> Self {
        Formula::Equals(Var::new(left), Var::new(right))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn not(body: Formula) -> Self {
        Formula::Not(Box::new(body))
    }

    pub fn exists(var: &str, sort: &str, body: Formula) -> Self {
        Formula::Exists(Var::new(var), Sort::new(sort), Box::new(body))
    }

    pub fn forall(var: &str, sort: &str, body: Formula) -> Self {
        Formula::Forall(Var::new(var), Sort::new(sort), Box::new(body))
    }

    /// Left fold with `&`; `None` for an empty sequence.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        parts.into_iter().reduce(Formula::and)
    }

    /// Left fold with `|`; `None` for an empty sequence.
    pub fn disjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        parts.into_iter().reduce(Formula::or)
    }

    /// The maximal `&`-operands of this formula, left to right.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    /// The maximal `|`-operands of this formula, left to right.
    pub fn disjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::Or(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    /// Atom, equality, truth constant, or the negation of one.
    pub fn is_literal(&self) -> bool {
        match self {
            Formula::Atom(..) | Formula::Equals(..) | Formula::True | Formula::False => true,
            Formula::Not(body) => matches!(
                **body,
                Formula::Atom(..) | Formula::Equals(..) | Formula::True | Formula::False
            ),
            _ => false,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(..) | Formula::Equals(..) | Formula::True | Formula::False => 1,
            Formula::Or(l, r) | Formula::And(l, r) => 1 + l.size() + r.size(),
            Formula::Exists(_, _, b) | Formula::Forall(_, _, b) | Formula::Not(b) => 1 + b.size(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        let mut note = |v: &Var, bound: &Vec<Var>| {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        };
        match self {
            Formula::Atom(_, x, y) | Formula::Equals(x, y) => {
                note(x, bound);
                note(y, bound);
            }
            Formula::True | Formula::False => {}
            Formula::Or(l, r) | Formula::And(l, r) => {
                l.collect_free(bound, out);
                r.collect_free(bound, out);
            }
            Formula::Not(b) => b.collect_free(bound, out),
            Formula::Exists(v, _, b) | Formula::Forall(v, _, b) => {
                bound.push(v.clone());
                b.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Every variable name occurring in the formula, bound or free.
    pub fn variable_names(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit(&mut |node| match node {
            Formula::Atom(_, x, y) | Formula::Equals(x, y) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Formula::Exists(v, _, _) | Formula::Forall(v, _, _) => {
                out.insert(v.clone());
            }
            _ => {}
        });
        out
    }

    pub fn predicates(&self) -> BTreeSet<Pred> {
        let mut out = BTreeSet::new();
        self.visit(&mut |node| {
            if let Formula::Atom(p, _, _) = node {
                out.insert(p.clone());
            }
        });
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Or(l, r) | Formula::And(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Formula::Exists(_, _, b) | Formula::Forall(_, _, b) | Formula::Not(b) => b.visit(f),
            _ => {}
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Exists(..) | Formula::Forall(..) => 0,
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            Formula::Not(..) => 3,
            _ => 4,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            f.write_str("(")?;
        }
        match self {
            Formula::Atom(p, x, y) => write!(f, "{p}({x},{y})")?,
            Formula::Equals(x, y) => write!(f, "{x} = {y}")?,
            Formula::True => f.write_str("true")?,
            Formula::False => f.write_str("false")?,
            Formula::Or(l, r) => {
                l.write_prec(f, 1)?;
                f.write_str(" | ")?;
                r.write_prec(f, 2)?;
            }
            Formula::And(l, r) => {
                l.write_prec(f, 2)?;
                f.write_str(" & ")?;
                r.write_prec(f, 3)?;
            }
            Formula::Not(b) => {
                f.write_str("~")?;
                b.write_prec(f, 3)?;
            }
            Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
                let q = if matches!(self, Formula::Exists(..)) {
                    "exists"
                } else {
                    "forall"
                };
                if s.is_universal() {
                    write!(f, "{q} {v}. ")?;
                } else {
                    write!(f, "{q} {v}:{s}. ")?;
                }
                b.write_prec(f, 0)?;
            }
        }
        if prec < min {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{self}`")
    }
}

/// A relation algebra term. Every leaf carries its type.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RaExpr {
    Atom(Pred, Sort, Sort),
    Top(Sort, Sort),
    Bot(Sort, Sort),
    /// Identity. Both sorts are equal except for identities produced from
    /// equalities between variables of different sorts.
    Id(Sort, Sort),
    Union(Box<RaExpr>, Box<RaExpr>),
    Intersection(Box<RaExpr>, Box<RaExpr>),
    Compose(Box<RaExpr>, Box<RaExpr>),
    Dagger(Box<RaExpr>, Box<RaExpr>),
    Complement(Box<RaExpr>),
    Converse(Box<RaExpr>),
}

/// The operator at the root of an [`RaExpr`], without its children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RaOp {
    Atom,
    Top,
    Bot,
    Id,
    Union,
    Intersection,
    Compose,
    Dagger,
    Complement,
    Converse,
}

impl RaOp {
    pub const BINARY: [RaOp; 4] = [RaOp::Union, RaOp::Intersection, RaOp::Compose, RaOp::Dagger];
    pub const UNARY: [RaOp; 2] = [RaOp::Complement, RaOp::Converse];
}

impl RaExpr {
    pub fn atom(pred: &str, source: &str, target: &str) -> Self {
        RaExpr::Atom(Pred::new(pred), Sort::new(source), Sort::new(target))
    }

    /// An atom of the homogeneous language.
    pub fn hom(pred: &str) -> Self {
        RaExpr::Atom(Pred::new(pred), Sort::universal(), Sort::universal())
    }

    pub fn top(source: &str, target: &str) -> Self {
        RaExpr::Top(Sort::new(source), Sort::new(target))
    }

    pub fn bot(source: &str, target: &str) -> Self {
        RaExpr::Bot(Sort::new(source), Sort::new(target))
    }

    pub fn id(sort: &str) -> Self {
        RaExpr::Id(Sort::new(sort), Sort::new(sort))
    }

    pub fn union(lhs: RaExpr, rhs: RaExpr) -> Self {
        RaExpr::Union(Box::new(lhs), Box::new(rhs))
    }

    pub fn intersection(lhs: RaExpr, rhs: RaExpr) -> Self {
        RaExpr::Intersection(Box::new(lhs), Box::new(rhs))
    }

    pub fn compose(lhs: RaExpr, rhs: RaExpr) -> Self {
        RaExpr::Compose(Box::new(lhs), Box::new(rhs))
    }

    pub fn dagger(lhs: RaExpr, rhs: RaExpr) -> Self {
        RaExpr::Dagger(Box::new(lhs), Box::new(rhs))
    }

    pub fn complement(body: RaExpr) -> Self {
        RaExpr::Complement(Box::new(body))
    }

    pub fn converse(body: RaExpr) -> Self {
        RaExpr::Converse(Box::new(body))
    }

    pub fn binary(op: RaOp, lhs: RaExpr, rhs: RaExpr) -> Self {
        match op {
            RaOp::Union => Self::union(lhs, rhs),
            RaOp::Intersection => Self::intersection(lhs, rhs),
            RaOp::Compose => Self::compose(lhs, rhs),
            RaOp::Dagger => Self::dagger(lhs, rhs),
            other => panic!("{other:?} is not a binary operator"),
        }
    }

    pub fn unary(op: RaOp, body: RaExpr) -> Self {
        match op {
            RaOp::Complement => Self::complement(body),
            RaOp::Converse => Self::converse(body),
            other => panic!("{other:?} is not a unary operator"),
        }
    }

    pub fn op(&self) -> RaOp {
        match self {
            RaExpr::Atom(..) => RaOp::Atom,
            RaExpr::Top(..) => RaOp::Top,
            RaExpr::Bot(..) => RaOp::Bot,
            RaExpr::Id(..) => RaOp::Id,
            RaExpr::Union(..) => RaOp::Union,
            RaExpr::Intersection(..) => RaOp::Intersection,
            RaExpr::Compose(..) => RaOp::Compose,
            RaExpr::Dagger(..) => RaOp::Dagger,
            RaExpr::Complement(..) => RaOp::Complement,
            RaExpr::Converse(..) => RaOp::Converse,
        }
    }

    pub fn children(&self) -> Vec<&RaExpr> {
        match self {
            RaExpr::Union(l, r)
            | RaExpr::Intersection(l, r)
            | RaExpr::Compose(l, r)
            | RaExpr::Dagger(l, r) => vec![l, r],
            RaExpr::Complement(b) | RaExpr::Converse(b) => vec![b],
            _ => Vec::new(),
        }
    }

    /// Rebuilds this node with new children (same arity as [`children`](Self::children)).
    pub fn with_children(&self, mut children: Vec<RaExpr>) -> RaExpr {
        match self.op() {
            RaOp::Union | RaOp::Intersection | RaOp::Compose | RaOp::Dagger => {
                let rhs = children.pop().expect("binary node needs two children");
                let lhs = children.pop().expect("binary node needs two children");
                RaExpr::binary(self.op(), lhs, rhs)
            }
            RaOp::Complement | RaOp::Converse => {
                RaExpr::unary(self.op(), children.pop().expect("unary node needs a child"))
            }
            _ => self.clone(),
        }
    }

    /// `(d1, d2)` of the term, computed structurally.
    pub fn type_of(&self) -> (Sort, Sort) {
        match self {
            RaExpr::Atom(_, s, t) | RaExpr::Top(s, t) | RaExpr::Bot(s, t) | RaExpr::Id(s, t) => {
                (s.clone(), t.clone())
            }
            RaExpr::Union(l, _) | RaExpr::Intersection(l, _) => l.type_of(),
            RaExpr::Compose(l, r) | RaExpr::Dagger(l, r) => (l.source(), r.target()),
            RaExpr::Complement(b) => b.type_of(),
            RaExpr::Converse(b) => {
                let (s, t) = b.type_of();
                (t, s)
            }
        }
    }

    pub fn source(&self) -> Sort {
        match self {
            RaExpr::Atom(_, s, _) | RaExpr::Top(s, _) | RaExpr::Bot(s, _) | RaExpr::Id(s, _) => {
                s.clone()
            }
            RaExpr::Union(l, _)
            | RaExpr::Intersection(l, _)
            | RaExpr::Compose(l, _)
            | RaExpr::Dagger(l, _) => l.source(),
            RaExpr::Complement(b) => b.source(),
            RaExpr::Converse(b) => b.target(),
        }
    }

    pub fn target(&self) -> Sort {
        match self {
            RaExpr::Atom(_, _, t) | RaExpr::Top(_, t) | RaExpr::Bot(_, t) | RaExpr::Id(_, t) => {
                t.clone()
            }
            RaExpr::Union(l, _) | RaExpr::Intersection(l, _) => l.target(),
            RaExpr::Compose(_, r) | RaExpr::Dagger(_, r) => r.target(),
            RaExpr::Complement(b) => b.target(),
            RaExpr::Converse(b) => b.source(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            RaExpr::Atom(..) | RaExpr::Top(..) | RaExpr::Bot(..) | RaExpr::Id(..) => 1,
            RaExpr::Union(l, r)
            | RaExpr::Intersection(l, r)
            | RaExpr::Compose(l, r)
            | RaExpr::Dagger(l, r) => 1 + l.size() + r.size(),
            RaExpr::Complement(b) | RaExpr::Converse(b) => 1 + b.size(),
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a RaExpr)) {
        f(self);
        match self {
            RaExpr::Union(l, r)
            | RaExpr::Intersection(l, r)
            | RaExpr::Compose(l, r)
            | RaExpr::Dagger(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            RaExpr::Complement(b) | RaExpr::Converse(b) => b.visit(f),
            _ => {}
        }
    }

    /// Occurrence count of every predicate symbol.
    pub fn predicate_counts(&self) -> BTreeMap<Pred, usize> {
        let mut out = BTreeMap::new();
        self.visit(&mut |node| {
            if let RaExpr::Atom(p, _, _) = node {
                *out.entry(p.clone()).or_insert(0) += 1;
            }
        });
        out
    }

    /// All sorts written anywhere in the term.
    pub fn sorts(&self) -> BTreeSet<Sort> {
        let mut out = BTreeSet::new();
        self.visit(&mut |node| match node {
            RaExpr::Atom(_, s, t) | RaExpr::Top(s, t) | RaExpr::Bot(s, t) | RaExpr::Id(s, t) => {
                out.insert(s.clone());
                out.insert(t.clone());
            }
            _ => {}
        });
        out
    }

    /// Applies `f` to every sort in the term.
    pub fn map_sorts(&self, f: &impl Fn(&Sort) -> Sort) -> RaExpr {
        match self {
            RaExpr::Atom(p, s, t) => RaExpr::Atom(p.clone(), f(s), f(t)),
            RaExpr::Top(s, t) => RaExpr::Top(f(s), f(t)),
            RaExpr::Bot(s, t) => RaExpr::Bot(f(s), f(t)),
            RaExpr::Id(s, t) => RaExpr::Id(f(s), f(t)),
            _ => self.with_children(
                self.children()
                    .into_iter()
                    .map(|c| c.map_sorts(f))
                    .collect(),
            ),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            RaExpr::Union(..) => 1,
            RaExpr::Intersection(..) => 2,
            RaExpr::Dagger(..) => 3,
            RaExpr::Compose(..) => 4,
            RaExpr::Complement(..) => 5,
            RaExpr::Converse(..) => 6,
            _ => 7,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            f.write_str("(")?;
        }
        let both_universal = |s: &Sort, t: &Sort| s.is_universal() && t.is_universal();
        match self {
            RaExpr::Atom(p, s, t) if both_universal(s, t) => write!(f, "{p}")?,
            RaExpr::Atom(p, s, t) => write!(f, "{p}[{s},{t}]")?,
            RaExpr::Top(s, t) if both_universal(s, t) => f.write_str("top")?,
            RaExpr::Top(s, t) => write!(f, "top[{s},{t}]")?,
            RaExpr::Bot(s, t) if both_universal(s, t) => f.write_str("bot")?,
            RaExpr::Bot(s, t) => write!(f, "bot[{s},{t}]")?,
            RaExpr::Id(s, t) if both_universal(s, t) => f.write_str("id")?,
            RaExpr::Id(s, t) if s == t => write!(f, "id[{s}]")?,
            RaExpr::Id(s, t) => write!(f, "id[{s},{t}]")?,
            RaExpr::Union(l, r)
            | RaExpr::Intersection(l, r)
            | RaExpr::Compose(l, r)
            | RaExpr::Dagger(l, r) => {
                let symbol = match self.op() {
                    RaOp::Union => " | ",
                    RaOp::Intersection => " & ",
                    RaOp::Compose => " ; ",
                    _ => " + ",
                };
                l.write_prec(f, prec)?;
                f.write_str(symbol)?;
                r.write_prec(f, prec + 1)?;
            }
            RaExpr::Complement(b) => {
                f.write_str("~")?;
                b.write_prec(f, 5)?;
            }
            RaExpr::Converse(b) => {
                b.write_prec(f, 6)?;
                f.write_str("^")?;
            }
        }
        if prec < min {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for RaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl fmt::Debug for RaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{self}`")
    }
}

/// One failed typing or scoping condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Condition 1: an atom is annotated with a type other than the declared one.
    PredicateType {
        term: String,
        pred: Pred,
        found: (Sort, Sort),
        declared: Option<(Sort, Sort)>,
    },
    /// Condition 2: operands of a union or intersection have different types.
    OperandTypes {
        term: String,
        left: (Sort, Sort),
        right: (Sort, Sort),
    },
    /// Condition 3: the middle sorts of a composition or relative sum differ.
    MiddleSort {
        term: String,
        left_target: Sort,
        right_source: Sort,
    },
    UnknownSort {
        term: String,
        sort: Sort,
    },
    UnboundVariable {
        term: String,
        var: Var,
    },
    /// A first-order atom whose argument sorts do not match the predicate type.
    AtomArguments {
        term: String,
        pred: Pred,
        found: (Sort, Sort),
        declared: Option<(Sort, Sort)>,
    },
}

impl Violation {
    /// The numbered relation algebra typing condition this violates, if any.
    pub fn condition(&self) -> Option<u8> {
        match self {
            Violation::PredicateType { .. } => Some(1),
            Violation::OperandTypes { .. } => Some(2),
            Violation::MiddleSort { .. } => Some(3),
            _ => None,
        }
    }
}

fn show_type(ty: &(Sort, Sort)) -> String {
    format!("({}, {})", ty.0, ty.1)
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PredicateType { term, pred, found, declared } => match declared {
                Some(d) => write!(
                    f,
                    "condition 1 violated at `{term}`: `{pred}` used at {} but declared {}",
                    show_type(found),
                    show_type(d)
                ),
                None => write!(
                    f,
                    "condition 1 violated at `{term}`: `{pred}` has no declared type"
                ),
            },
            Violation::OperandTypes { term, left, right } => write!(
                f,
                "condition 2 violated at `{term}`: operand types {} and {} differ",
                show_type(left),
                show_type(right)
            ),
            Violation::MiddleSort { term, left_target, right_source } => write!(
                f,
                "condition 3 violated at `{term}`: left target {left_target} differs from right source {right_source}"
            ),
            Violation::UnknownSort { term, sort } => {
                write!(f, "unknown sort `{sort}` in `{term}`")
            }
            Violation::UnboundVariable { term, var } => {
                write!(f, "variable `{var}` is not bound in `{term}`")
            }
            Violation::AtomArguments { term, pred, found, declared } => match declared {
                Some(d) => write!(
                    f,
                    "ill-typed atom `{term}`: arguments have sorts {} but `{pred}` is declared {}",
                    show_type(found),
                    show_type(d)
                ),
                None => write!(f, "ill-typed atom `{term}`: `{pred}` is not declared"),
            },
        }
    }
}

/// Checks the three well-typedness conditions of relation algebra terms
/// against `sig`. Returns every violation found, outermost first.
pub fn check_well_typed_ra(expr: &RaExpr, sig: &Signature) -> Vec<Violation> {
    let mut out = Vec::new();
    check_ra(expr, sig, &mut out);
    out
}

fn check_ra(expr: &RaExpr, sig: &Signature, out: &mut Vec<Violation>) {
    match expr {
        RaExpr::Atom(p, s, t) => {
            let declared = sig.predicate_type(p);
            if declared.as_ref() != Some(&(s.clone(), t.clone())) {
                out.push(Violation::PredicateType {
                    term: expr.to_string(),
                    pred: p.clone(),
                    found: (s.clone(), t.clone()),
                    declared,
                });
            }
        }
        RaExpr::Top(s, t) | RaExpr::Bot(s, t) | RaExpr::Id(s, t) => {
            let sorts: BTreeSet<&Sort> = [s, t].into_iter().collect();
            for sort in sorts {
                if !sig.has_sort(sort) {
                    out.push(Violation::UnknownSort {
                        term: expr.to_string(),
                        sort: sort.clone(),
                    });
                }
            }
        }
        RaExpr::Union(l, r) | RaExpr::Intersection(l, r) => {
            let (lt, rt) = (l.type_of(), r.type_of());
            if lt != rt {
                out.push(Violation::OperandTypes {
                    term: expr.to_string(),
                    left: lt,
                    right: rt,
                });
            }
            check_ra(l, sig, out);
            check_ra(r, sig, out);
        }
        RaExpr::Compose(l, r) | RaExpr::Dagger(l, r) => {
            let (lt, rs) = (l.target(), r.source());
            if lt != rs {
                out.push(Violation::MiddleSort {
                    term: expr.to_string(),
                    left_target: lt,
                    right_source: rs,
                });
            }
            check_ra(l, sig, out);
            check_ra(r, sig, out);
        }
        RaExpr::Complement(b) | RaExpr::Converse(b) => check_ra(b, sig, out),
    }
}

/// Checks that `formula` is closed and that every atom's arguments are
/// bound at the sorts its predicate is declared with. Shadowing is allowed;
/// the innermost binder wins.
pub fn check_closed_and_typed_fo3(formula: &Formula, sig: &Signature) -> Vec<Violation> {
    let mut out = Vec::new();
    check_fo3(formula, sig, &mut Vec::new(), &mut out);
    out
}

fn check_fo3(
    formula: &Formula,
    sig: &Signature,
    scope: &mut Vec<(Var, Sort)>,
    out: &mut Vec<Violation>,
) {
    let lookup = |v: &Var, scope: &Vec<(Var, Sort)>| {
        scope
            .iter()
            .rev()
            .find(|(w, _)| w == v)
            .map(|(_, s)| s.clone())
    };
    match formula {
        Formula::Atom(p, x, y) => {
            let (sx, sy) = (lookup(x, scope), lookup(y, scope));
            for (v, s) in [(x, &sx), (y, &sy)] {
                if s.is_none() && !out.iter().any(|o| matches!(o, Violation::UnboundVariable { var, term } if var == v && *term == formula.to_string())) {
                    out.push(Violation::UnboundVariable {
                        term: formula.to_string(),
                        var: v.clone(),
                    });
                }
            }
            if let (Some(sx), Some(sy)) = (sx, sy) {
                let declared = sig.predicate_type(p);
                if declared.as_ref() != Some(&(sx.clone(), sy.clone())) {
                    out.push(Violation::AtomArguments {
                        term: formula.to_string(),
                        pred: p.clone(),
                        found: (sx, sy),
                        declared,
                    });
                }
            }
        }
        Formula::Equals(x, y) => {
            let vars: Vec<&Var> = if x == y { vec![x] } else { vec![x, y] };
            for v in vars {
                if lookup(v, scope).is_none() {
                    out.push(Violation::UnboundVariable {
                        term: formula.to_string(),
                        var: v.clone(),
                    });
                }
            }
        }
        Formula::True | Formula::False => {}
        Formula::Or(l, r) | Formula::And(l, r) => {
            check_fo3(l, sig, scope, out);
            check_fo3(r, sig, scope, out);
        }
        Formula::Not(b) => check_fo3(b, sig, scope, out),
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            if !sig.has_sort(s) {
                out.push(Violation::UnknownSort {
                    term: formula.to_string(),
                    sort: s.clone(),
                });
            }
            scope.push((v.clone(), s.clone()));
            check_fo3(b, sig, scope, out);
            scope.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn het_sig() -> Signature {
        let mut sig = Signature::new();
        for s in ["P", "Q", "R"] {
            sig.add_sort(Sort::new(s)).unwrap();
        }
        sig.add_predicate(Pred::new("a"), Sort::new("P"), Sort::new("Q"))
            .unwrap();
        sig.add_predicate(Pred::new("b"), Sort::new("Q"), Sort::new("R"))
            .unwrap();
        sig
    }

    #[test]
    fn type_of_follows_the_operators() {
        assert_eq!(RaExpr::id("P").type_of(), (Sort::new("P"), Sort::new("P")));
        assert_eq!(
            RaExpr::converse(RaExpr::atom("a", "P", "Q")).type_of(),
            (Sort::new("Q"), Sort::new("P"))
        );
        let comp = RaExpr::compose(RaExpr::atom("a", "P", "Q"), RaExpr::atom("b", "Q", "R"));
        assert_eq!(comp.type_of(), (Sort::new("P"), Sort::new("R")));
        assert_eq!(comp.source(), Sort::new("P"));
        assert_eq!(comp.target(), Sort::new("R"));
    }

    #[test]
    fn each_typing_condition_is_reported() {
        let sig = het_sig();
        assert!(check_well_typed_ra(&RaExpr::atom("a", "P", "Q"), &sig).is_empty());

        let flipped = check_well_typed_ra(&RaExpr::atom("a", "Q", "P"), &sig);
        assert_eq!(flipped.len(), 1);
        assert_eq!(flipped[0].condition(), Some(1));

        let union = RaExpr::union(RaExpr::atom("a", "P", "Q"), RaExpr::top("Q", "R"));
        let v = check_well_typed_ra(&union, &sig);
        assert_eq!(
            v.iter()
                .filter_map(Violation::condition)
                .collect::<Vec<_>>(),
            vec![2]
        );

        let comp = RaExpr::compose(RaExpr::atom("a", "P", "Q"), RaExpr::atom("a", "P", "Q"));
        let v = check_well_typed_ra(&comp, &sig);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].condition(), Some(3));
        assert!(v[0].to_string().contains("condition 3"));
    }

    #[test]
    fn fo3_scoping_and_typing() {
        let sig = het_sig();
        let good = Formula::exists(
            "x",
            "P",
            Formula::exists("y", "Q", Formula::atom("a", "x", "y")),
        );
        assert!(check_closed_and_typed_fo3(&good, &sig).is_empty());

        let open = Formula::atom("a", "x", "y");
        let v = check_closed_and_typed_fo3(&open, &sig);
        assert_eq!(v.len(), 2);
        assert!(v
            .iter()
            .all(|v| matches!(v, Violation::UnboundVariable { .. })));

        let swapped = Formula::exists(
            "x",
            "Q",
            Formula::exists("y", "P", Formula::atom("a", "x", "y")),
        );
        let v = check_closed_and_typed_fo3(&swapped, &sig);
        assert!(matches!(v.as_slice(), [Violation::AtomArguments { .. }]));

        // the inner binder of a shadowed variable decides its sort
        let shadow = Formula::exists(
            "x",
            "Q",
            Formula::exists(
                "x",
                "P",
                Formula::exists("y", "Q", Formula::atom("a", "x", "y")),
            ),
        );
        assert!(check_closed_and_typed_fo3(&shadow, &sig).is_empty());
    }

    #[test]
    fn sizes_count_nodes() {
        assert_eq!(RaExpr::atom("a", "P", "Q").size(), 1);
        let pat = RaExpr::intersection(
            RaExpr::union(RaExpr::hom("A"), RaExpr::hom("B")),
            RaExpr::hom("B"),
        );
        assert_eq!(pat.size(), 5);
        assert_eq!(
            Formula::exists("x", "U", Formula::atom("a", "x", "x")).size(),
            2
        );
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        let u = RaExpr::union(RaExpr::atom("a", "P", "Q"), RaExpr::atom("a", "P", "Q"));
        assert_eq!(u.to_string(), "a[P,Q] | a[P,Q]");
        let e = RaExpr::compose(
            RaExpr::top("U", "U"),
            RaExpr::intersection(RaExpr::hom("a"), RaExpr::id("U")),
        );
        assert_eq!(e.to_string(), "top ; (a & id)");
        assert_eq!(
            Formula::not(Formula::atom("a", "x", "y")).to_string(),
            "~a(x,y)"
        );
        let right_nested = RaExpr::compose(
            RaExpr::top("U", "U"),
            RaExpr::compose(
                RaExpr::intersection(RaExpr::hom("A"), RaExpr::id("U")),
                RaExpr::top("U", "U"),
            ),
        );
        assert_eq!(right_nested.to_string(), "top ; ((A & id) ; top)");
        assert_eq!(
            RaExpr::converse(RaExpr::complement(RaExpr::hom("a"))).to_string(),
            "(~a)^"
        );
        assert_eq!(
            RaExpr::complement(RaExpr::converse(RaExpr::hom("a"))).to_string(),
            "~a^"
        );
        let nice = Formula::and(
            Formula::exists("y", "U", Formula::atom("A", "y", "y")),
            Formula::exists("x", "U", Formula::atom("A", "x", "x")),
        );
        assert_eq!(nice.to_string(), "(exists y. A(y,y)) & (exists x. A(x,x))");
    }

    #[test]
    fn free_variables_respect_binders() {
        let f = Formula::and(
            Formula::exists("x", "U", Formula::atom("a", "x", "y")),
            Formula::atom("b", "x", "x"),
        );
        let free: Vec<_> = f.free_vars().into_iter().map(|v| v.to_string()).collect();
        assert_eq!(free, vec!["x", "y"]);
    }

    #[test]
    fn signature_rejects_unknown_and_duplicate_declarations() {
        let mut sig = Signature::new();
        sig.add_sort(Sort::new("P")).unwrap();
        assert_eq!(
            sig.add_predicate(Pred::new("A"), Sort::new("P"), Sort::new("Q")),
            Err(SignatureError::UnknownSort(Sort::new("Q")))
        );
        assert!(sig.add_sort(Sort::new("P")).is_err());
        sig.add_predicate(Pred::new("A"), Sort::new("P"), Sort::new("P"))
            .unwrap();
        assert!(sig
            .add_predicate(Pred::new("A"), Sort::new("P"), Sort::new("P"))
            .is_err());
        assert_eq!(
            Signature::homogeneous().predicate_type(&Pred::new("zz")),
            Some((Sort::universal(), Sort::universal()))
        );
    }
}
