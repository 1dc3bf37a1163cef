//! First-order formulas to relation algebra: negation normal form, good
//! form, nice form, then the final structural translation relative to a
//! pair of target variables.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::simplify::Simplifier;
use crate::syntax::{
    check_closed_and_typed_fo3, check_well_typed_ra, Formula, Mode, RaExpr, Signature, Sort, Var,
    Violation,
};

/// Names every translated formula is written over.
pub const VARIABLE_POOL: [&str; 3] = ["x", "y", "z"];

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("input rejected:\n{}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("`{0}` has more than three free variables and cannot be renamed into three")]
    TooManyVariables(String),
    #[error("`{0}` does not split into source and target parts")]
    NotNice(String),
    #[error("translation produced an ill-typed term:\n{}", list(.0))]
    IllTyped(Vec<Violation>),
}

fn list(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The source and target variable of the relation being built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetPair {
    pub left: (Var, Sort),
    pub right: (Var, Sort),
}

impl TargetPair {
    pub fn new(left: (&str, &str), right: (&str, &str)) -> Self {
        TargetPair {
            left: (Var::new(left.0), Sort::new(left.1)),
            right: (Var::new(right.0), Sort::new(right.1)),
        }
    }

    /// `x:Left, y:Right` in heterogeneous mode, `x:U, y:U` otherwise.
    pub fn initial(mode: Mode) -> Self {
        match mode {
            Mode::Homogeneous => Self::new(("x", "U"), ("y", "U")),
            Mode::Heterogeneous => Self::new(("x", "Left"), ("y", "Right")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationTrace {
    pub original: Formula,
    pub nnf: Formula,
    pub good: Formula,
    pub nice: Formula,
    pub raw: RaExpr,
    /// `None` when simplification was skipped.
    pub simplified: Option<RaExpr>,
}

impl TranslationTrace {
    /// The simplified term if there is one, the raw term otherwise.
    pub fn result(&self) -> &RaExpr {
        self.simplified.as_ref().unwrap_or(&self.raw)
    }
}

impl fmt::Display for TranslationTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "1. Original Expression: {}", self.original)?;
        writeln!(f, "2. Negation Normal Form: {}", self.nnf)?;
        writeln!(f, "3. Good FO3 Translation: {}", self.good)?;
        writeln!(f, "4. Nice FO3 Translation: {}", self.nice)?;
        writeln!(f, "5. Final Translation: {}", self.raw)?;
        if let Some(s) = &self.simplified {
            writeln!(f, "6. Final Translation Simplified: {s}")?;
        }
        Ok(())
    }
}

pub fn to_nnf(phi: &Formula) -> Formula {
    nnf(phi, false)
}

fn nnf(phi: &Formula, negate: bool) -> Formula {
    match phi {
        Formula::Not(b) => nnf(b, !negate),
        Formula::True if negate => Formula::False,
        Formula::False if negate => Formula::True,
        Formula::Atom(..) | Formula::Equals(..) | Formula::True | Formula::False => {
            if negate {
                Formula::not(phi.clone())
            } else {
                phi.clone()
            }
        }
        Formula::And(l, r) | Formula::Or(l, r) => {
            let (l, r) = (nnf(l, negate), nnf(r, negate));
            if matches!(phi, Formula::And(..)) != negate {
                Formula::and(l, r)
            } else {
                Formula::or(l, r)
            }
        }
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            let body = Box::new(nnf(b, negate));
            if matches!(phi, Formula::Exists(..)) != negate {
                Formula::Exists(v.clone(), s.clone(), body)
            } else {
                Formula::Forall(v.clone(), s.clone(), body)
            }
        }
    }
}

type Clauses = Vec<Vec<Formula>>;

fn push_unique<T: PartialEq>(out: &mut Vec<T>, item: T) {
    if !out.contains(&item) {
        out.push(item);
    }
}

fn union_clauses(a: Clauses, b: Clauses) -> Clauses {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for c in a.into_iter().chain(b) {
        push_unique(&mut out, c);
    }
    out
}

fn product_clauses(a: &Clauses, b: &Clauses) -> Clauses {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ca in a {
        for cb in b {
            let mut merged = ca.clone();
            for f in cb {
                push_unique(&mut merged, f.clone());
            }
            push_unique(&mut out, merged);
        }
    }
    out
}

/// Distributes connectives so that every existential body is a
/// conjunction of literals and quantified formulas, and every universal
/// body a disjunction. Expects negation normal form.
pub fn to_good(phi: &Formula) -> Formula {
    match phi {
        Formula::And(l, r) => Formula::and(to_good(l), to_good(r)),
        Formula::Or(l, r) => Formula::or(to_good(l), to_good(r)),
        Formula::Exists(v, s, b) => {
            let parts = clauses(b, true).into_iter().map(|c| {
                let body = Formula::conjunction(c).expect("clauses are nonempty");
                Formula::Exists(v.clone(), s.clone(), Box::new(body))
            });
            Formula::disjunction(parts).expect("at least one clause")
        }
        Formula::Forall(v, s, b) => {
            let parts = clauses(b, false).into_iter().map(|c| {
                let body = Formula::disjunction(c).expect("clauses are nonempty");
                Formula::Forall(v.clone(), s.clone(), Box::new(body))
            });
            Formula::conjunction(parts).expect("at least one clause")
        }
        _ => phi.clone(),
    }
}

/// Under an existential: a disjunction of conjunctions. Under a universal:
/// a conjunction of disjunctions.
fn clauses(phi: &Formula, existential: bool) -> Clauses {
    match phi {
        Formula::And(l, r) | Formula::Or(l, r) => {
            let (a, b) = (clauses(l, existential), clauses(r, existential));
            if matches!(phi, Formula::Or(..)) == existential {
                union_clauses(a, b)
            } else {
                product_clauses(&a, &b)
            }
        }
        _ => vec![vec![to_good(phi)]],
    }
}

/// Pushes quantifiers inward past the parts of their body that do not
/// mention the bound variable. Expects good form.
pub fn to_nice(phi: &Formula) -> Formula {
    match phi {
        Formula::And(l, r) => Formula::and(to_nice(l), to_nice(r)),
        Formula::Or(l, r) => Formula::or(to_nice(l), to_nice(r)),
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            let existential = matches!(phi, Formula::Exists(..));
            let body = to_nice(b);
            let parts = if existential {
                body.conjuncts()
            } else {
                body.disjuncts()
            };
            let (kept, hoisted): (Vec<&Formula>, Vec<&Formula>) =
                parts.into_iter().partition(|p| p.free_vars().contains(v));
            let fold = |items: Vec<&Formula>| {
                let items = items.into_iter().cloned();
                if existential {
                    Formula::conjunction(items)
                } else {
                    Formula::disjunction(items)
                }
            };
            let quantified = fold(kept).map(|k| {
                if existential {
                    Formula::Exists(v.clone(), s.clone(), Box::new(k))
                } else {
                    Formula::Forall(v.clone(), s.clone(), Box::new(k))
                }
            });
            let outside = fold(hoisted);
            match (outside, quantified) {
                (Some(o), Some(q)) if existential => Formula::and(o, q),
                (Some(o), Some(q)) => Formula::or(o, q),
                (Some(only), None) | (None, Some(only)) => only,
                (None, None) => unreachable!("a body has at least one part"),
            }
        }
        _ => phi.clone(),
    }
}

/// The first pool name other than those in `taken`.
fn fresh_name(taken: &[&Var]) -> Var {
    VARIABLE_POOL
        .iter()
        .map(|n| Var::new(n))
        .find(|v| !taken.contains(&v))
        .expect("three names cannot all be taken by two variables")
}

/// Translates a nice formula whose free variables are among the target
/// pair into a term of type `(left sort, right sort)`.
pub fn final_translate(phi: &Formula, tgt: &TargetPair) -> Result<RaExpr, TranslateError> {
    let (a, sa) = (&tgt.left.0, &tgt.left.1);
    let (b, sb) = (&tgt.right.0, &tgt.right.1);
    if a == b {
        return Err(TranslateError::NotNice(format!(
            "{phi} (target variables coincide)"
        )));
    }
    let not_nice = || TranslateError::NotNice(phi.to_string());
    Ok(match phi {
        Formula::True => RaExpr::Top(sa.clone(), sb.clone()),
        Formula::False => RaExpr::Bot(sa.clone(), sb.clone()),
        Formula::Atom(p, u, v) => {
            let atom = |s: &Sort, t: &Sort| RaExpr::Atom(p.clone(), s.clone(), t.clone());
            let reflexive =
                |s: &Sort| RaExpr::intersection(atom(s, s), RaExpr::Id(s.clone(), s.clone()));
            match (u == a, u == b, v == a, v == b) {
                (true, _, _, true) => atom(sa, sb),
                (_, true, true, _) => RaExpr::converse(atom(sb, sa)),
                (true, _, true, _) => {
                    RaExpr::compose(reflexive(sa), RaExpr::Top(sa.clone(), sb.clone()))
                }
                (_, true, _, true) => {
                    RaExpr::compose(RaExpr::Top(sa.clone(), sb.clone()), reflexive(sb))
                }
                _ => return Err(not_nice()),
            }
        }
        Formula::Equals(u, v) => match (u == a, u == b, v == a, v == b) {
            (true, _, _, true) => RaExpr::Id(sa.clone(), sb.clone()),
            (_, true, true, _) => RaExpr::converse(RaExpr::Id(sb.clone(), sa.clone())),
            _ if u == v && (u == a || u == b) => RaExpr::Top(sa.clone(), sb.clone()),
            _ => return Err(not_nice()),
        },
        Formula::Not(body) => RaExpr::complement(final_translate(body, tgt)?),
        Formula::And(l, r) => {
            RaExpr::intersection(final_translate(l, tgt)?, final_translate(r, tgt)?)
        }
        Formula::Or(l, r) => RaExpr::union(final_translate(l, tgt)?, final_translate(r, tgt)?),
        Formula::Exists(z, sz, body) | Formula::Forall(z, sz, body) => {
            // The bound name shadows a target variable, which is therefore
            // not free here: give that end of the relation another name.
            if z == a {
                let renamed = TargetPair {
                    left: (fresh_name(&[z, b]), sa.clone()),
                    right: tgt.right.clone(),
                };
                return final_translate(phi, &renamed);
            }
            if z == b {
                let renamed = TargetPair {
                    left: tgt.left.clone(),
                    right: (fresh_name(&[z, a]), sb.clone()),
                };
                return final_translate(phi, &renamed);
            }
            let existential = matches!(phi, Formula::Exists(..));
            let parts = if existential {
                body.conjuncts()
            } else {
                body.disjuncts()
            };
            let mut left = Vec::new();
            let mut right = Vec::new();
            for part in parts {
                let free = part.free_vars();
                match (free.contains(a), free.contains(b)) {
                    (true, true) => return Err(TranslateError::NotNice(part.to_string())),
                    (true, false) => left.push(part.clone()),
                    (false, _) => right.push(part.clone()),
                }
            }
            let fold = |items: Vec<Formula>| {
                if existential {
                    Formula::conjunction(items).unwrap_or(Formula::True)
                } else {
                    Formula::disjunction(items).unwrap_or(Formula::False)
                }
            };
            let to_z = TargetPair {
                left: tgt.left.clone(),
                right: (z.clone(), sz.clone()),
            };
            let from_z = TargetPair {
                left: (z.clone(), sz.clone()),
                right: tgt.right.clone(),
            };
            let l = final_translate(&fold(left), &to_z)?;
            let r = final_translate(&fold(right), &from_z)?;
            if existential {
                RaExpr::compose(l, r)
            } else {
                RaExpr::dagger(l, r)
            }
        }
    })
}

/// Renames bound variables so that at most three names occur, reusing a
/// name once the variable holding it is no longer needed.
pub fn reduce_variables(phi: &Formula) -> Result<Formula, TranslateError> {
    if let Some(v) = phi.free_vars().into_iter().next() {
        return Err(TranslateError::Invalid(vec![Violation::UnboundVariable {
            term: phi.to_string(),
            var: v,
        }]));
    }
    rename(phi, &mut Vec::new())
}

fn rename(phi: &Formula, scope: &mut Vec<(Var, Var)>) -> Result<Formula, TranslateError> {
    let lookup = |v: &Var, scope: &Vec<(Var, Var)>| {
        scope
            .iter()
            .rev()
            .find(|(old, _)| old == v)
            .map(|(_, new)| new.clone())
            .expect("closed")
    };
    Ok(match phi {
        Formula::Atom(p, x, y) => Formula::Atom(p.clone(), lookup(x, scope), lookup(y, scope)),
        Formula::Equals(x, y) => Formula::Equals(lookup(x, scope), lookup(y, scope)),
        Formula::True | Formula::False => phi.clone(),
        Formula::Not(b) => Formula::not(rename(b, scope)?),
        Formula::And(l, r) => Formula::and(rename(l, scope)?, rename(r, scope)?),
        Formula::Or(l, r) => Formula::or(rename(l, scope)?, rename(r, scope)?),
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            let needed: BTreeSet<Var> = phi.free_vars().iter().map(|w| lookup(w, scope)).collect();
            let in_scope: BTreeSet<Var> = scope.iter().map(|(_, new)| new.clone()).collect();
            let pool = VARIABLE_POOL.iter().map(|n| Var::new(n));
            let name = pool
                .clone()
                .find(|n| !needed.contains(n) && !in_scope.contains(n))
                .or_else(|| pool.clone().find(|n| !needed.contains(n)))
                .ok_or_else(|| TranslateError::TooManyVariables(phi.to_string()))?;
            scope.push((v.clone(), name.clone()));
            let body = rename(b, scope);
            scope.pop();
            let body = Box::new(body?);
            if matches!(phi, Formula::Exists(..)) {
                Formula::Exists(name, s.clone(), body)
            } else {
                Formula::Forall(name, s.clone(), body)
            }
        }
    })
}

/// Runs the whole pipeline on a closed, well-typed formula. In
/// heterogeneous mode the sorts `Left` and `Right` are added to the
/// signature used for checking the result.
pub fn translate(
    phi: &Formula,
    sig: &Signature,
    mode: Mode,
    simplifier: Option<&Simplifier>,
) -> Result<TranslationTrace, TranslateError> {
    let violations = check_closed_and_typed_fo3(phi, sig);
    if !violations.is_empty() {
        return Err(TranslateError::Invalid(violations));
    }
    let reduced = reduce_variables(phi)?;
    let nnf = to_nnf(&reduced);
    let good = to_good(&nnf);
    let nice = to_nice(&good);
    let tgt = TargetPair::initial(mode);
    let raw = final_translate(&nice, &tgt)?;
    let mut full_sig = sig.clone();
    full_sig.ensure_sort(tgt.left.1.clone());
    full_sig.ensure_sort(tgt.right.1.clone());
    let violations = check_well_typed_ra(&raw, &full_sig);
    if !violations.is_empty() {
        return Err(TranslateError::IllTyped(violations));
    }
    let simplified = simplifier.map(|s| s.simplify(&raw).0);
    Ok(TranslationTrace {
        original: phi.clone(),
        nnf,
        good,
        nice,
        raw,
        simplified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_fo3, parse_ra, parse_signature};

    fn hom(s: &str) -> Formula {
        parse_fo3(s, Mode::Homogeneous).unwrap()
    }

    fn het(s: &str) -> Formula {
        parse_fo3(s, Mode::Heterogeneous).unwrap()
    }

    #[test]
    fn negation_normal_form() {
        assert_eq!(
            to_nnf(&hom("~(forall x. forall y. ~A(x,x) | ~A(y,y))")),
            hom("exists x. exists y. A(x,x) & A(y,y)")
        );
        assert_eq!(to_nnf(&hom("A(x,y)")), hom("A(x,y)"));
        assert_eq!(to_nnf(&hom("~(P(x,x) & Q(x,x))")), hom("~P(x,x) | ~Q(x,x)"));
        assert_eq!(to_nnf(&hom("~~~true")), Formula::False);
    }

    #[test]
    fn good_form_distributes_under_quantifiers() {
        let f = hom("exists x. exists y. A(x,x) & A(y,y)");
        assert_eq!(to_good(&f), f);
        let nnf = het("forall x:P. forall y:Q. exists z:R. (~A(x,z) | ~B(z,x)) & C(x,y)");
        assert_eq!(
            to_good(&nnf),
            het("forall x:P. forall y:Q. (exists z:R. ~A(x,z) & C(x,y)) | (exists z:R. ~B(z,x) & C(x,y))")
        );
        // duplicate literals collapse
        assert_eq!(
            to_good(&hom("exists x. A(x,x) & A(x,x)")),
            hom("exists x. A(x,x)")
        );
    }

    #[test]
    fn nice_form_hoists_independent_parts() {
        assert_eq!(
            to_nice(&hom("exists x. exists y. A(x,x) & A(y,y)")),
            hom("(exists y. A(y,y)) & (exists x. A(x,x))")
        );
        let good = het("forall x:P. forall y:Q. (exists z:R. ~A(x,z) & C(x,y)) | (exists z:R. ~B(z,x) & C(x,y))");
        assert_eq!(
            to_nice(&good),
            het("forall x:P. forall y:Q. (C(x,y) & (exists z:R. ~A(x,z))) | (C(x,y) & (exists z:R. ~B(z,x)))")
        );
    }

    #[test]
    fn final_translation_cases() {
        let hom_sig = Signature::homogeneous();
        let ra = |s: &str| parse_ra(s, &hom_sig, Mode::Homogeneous).unwrap();
        let t = TargetPair::initial(Mode::Homogeneous);
        assert_eq!(final_translate(&Formula::True, &t).unwrap(), ra("top"));
        assert_eq!(final_translate(&hom("A(y,x)"), &t).unwrap(), ra("A^"));
        assert_eq!(
            final_translate(&hom("A(x,x)"), &t).unwrap(),
            ra("(A & id) ; top")
        );
        assert_eq!(
            final_translate(&hom("A(y,y)"), &t).unwrap(),
            ra("top ; (A & id)")
        );
        assert_eq!(final_translate(&hom("y = x"), &t).unwrap(), ra("id^"));
        assert_eq!(final_translate(&hom("y = y"), &t).unwrap(), ra("top"));
        assert_eq!(
            final_translate(&hom("(exists y. A(y,y)) & (exists x. A(x,x))"), &t).unwrap(),
            ra("(top ; ((A & id) ; top)) & (top ; ((A & id) ; top))")
        );
        assert!(matches!(
            final_translate(&hom("exists z. A(x,z) & A(z,y) & B(x,y)"), &t),
            Err(TranslateError::NotNice(_))
        ));
    }

    #[test]
    fn renaming_reuses_dead_names() {
        let f = het("exists x:A. exists y:B. exists z:C. exists w:D. a(x,w)");
        assert_eq!(
            reduce_variables(&f).unwrap(),
            het("exists x:A. exists y:B. exists z:C. exists y:D. a(x,y)")
        );
        let f = hom("exists x. A(x,x)");
        assert_eq!(reduce_variables(&f).unwrap(), f);
        let f = hom("exists x. exists y. exists z. exists v. A(x,v) & A(y,v) & A(z,v)");
        assert!(matches!(
            reduce_variables(&f),
            Err(TranslateError::TooManyVariables(_))
        ));
    }

    #[test]
    fn renamed_scenario_translates() {
        let sig = parse_signature(
            "sort A\nsort B\nsort C\nsort D\npred a : A -> D",
            Mode::Heterogeneous,
        )
        .unwrap();
        let f = het("exists x:A. exists y:B. exists z:C. exists w:D. a(x,w)");
        let trace = translate(&f, &sig, Mode::Heterogeneous, None).unwrap();
        assert_eq!(
            trace.raw.to_string(),
            "top[Left,A] ; (a[A,D] ; top[D,Right])"
        );
    }

    #[test]
    fn trace_omits_the_last_step_without_simplifier() {
        let trace = translate(
            &Formula::True,
            &Signature::homogeneous(),
            Mode::Homogeneous,
            None,
        )
        .unwrap();
        assert_eq!(trace.to_string().lines().count(), 5);
        assert_eq!(trace.result(), &RaExpr::top("U", "U"));
    }

    #[test]
    fn open_formulas_are_rejected() {
        let err = translate(
            &hom("A(x,y)"),
            &Signature::homogeneous(),
            Mode::Homogeneous,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, TranslateError::Invalid(_)));
    }
}
