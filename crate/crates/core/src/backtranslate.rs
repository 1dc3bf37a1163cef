//! Relation terms back to first-order formulas, clause by clause from the
//! set-theoretic reading of each operator.

use crate::syntax::{Formula, RaExpr, Var};
use crate::translate::VARIABLE_POOL;

/// A formula with free variables among `a` and `b` that holds exactly for
/// the pairs in the denotation of `e`. Intermediate points are bound with
/// the pool name not in `{a, b}`, so at most three names appear when `a`
/// and `b` come from the pool.
pub fn ra_to_fo3(e: &RaExpr, a: &Var, b: &Var) -> Formula {
    assert_ne!(a, b, "source and target variables must differ");
    match e {
        RaExpr::Atom(p, _, _) => Formula::Atom(p.clone(), a.clone(), b.clone()),
        RaExpr::Top(..) => Formula::True,
        RaExpr::Bot(..) => Formula::False,
        RaExpr::Id(..) => Formula::Equals(a.clone(), b.clone()),
        RaExpr::Union(l, r) => Formula::or(ra_to_fo3(l, a, b), ra_to_fo3(r, a, b)),
        RaExpr::Intersection(l, r) => Formula::and(ra_to_fo3(l, a, b), ra_to_fo3(r, a, b)),
        RaExpr::Complement(body) => Formula::not(ra_to_fo3(body, a, b)),
        RaExpr::Converse(body) => ra_to_fo3(body, b, a),
        RaExpr::Compose(l, r) | RaExpr::Dagger(l, r) => {
            let c = third(a, b);
            let lhs = ra_to_fo3(l, a, &c);
            let rhs = ra_to_fo3(r, &c, b);
            let middle = l.target();
            if matches!(e, RaExpr::Compose(..)) {
                Formula::Exists(c, middle, Box::new(Formula::and(lhs, rhs)))
            } else {
                Formula::Forall(c, middle, Box::new(Formula::or(lhs, rhs)))
            }
        }
    }
}

/// The first pool name different from both arguments.
fn third(a: &Var, b: &Var) -> Var {
    VARIABLE_POOL
        .iter()
        .map(|n| Var::new(n))
        .find(|v| v != a && v != b)
        .expect("the pool has three names")
}

/// The closed formula stating that `e` is the full relation on its type.
pub fn close(e: &RaExpr) -> Formula {
    let (s, t) = e.type_of();
    let (x, y) = (Var::new("x"), Var::new("y"));
    let body = ra_to_fo3(e, &x, &y);
    Formula::Forall(x, s, Box::new(Formula::Forall(y, t, Box::new(body))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_fo3, parse_ra};
    use crate::syntax::{Mode, Signature};

    fn x() -> Var {
        Var::new("x")
    }

    fn y() -> Var {
        Var::new("y")
    }

    #[test]
    fn clauses() {
        let sig = Signature::homogeneous();
        let ra = |s: &str| parse_ra(s, &sig, Mode::Homogeneous).unwrap();
        let fo = |s: &str| parse_fo3(s, Mode::Homogeneous).unwrap();
        assert_eq!(
            ra_to_fo3(&ra("a ; b"), &x(), &y()),
            fo("exists z. a(x,z) & b(z,y)")
        );
        assert_eq!(
            ra_to_fo3(&ra("a + b"), &x(), &y()),
            fo("forall z. a(x,z) | b(z,y)")
        );
        assert_eq!(ra_to_fo3(&ra("~a^"), &x(), &y()), fo("~a(y,x)"));
        // nested compositions rotate through the pool
        assert_eq!(
            ra_to_fo3(&ra("(a ; b) ; c"), &x(), &y()),
            fo("exists z. (exists y. a(x,y) & b(y,z)) & c(z,y)")
        );
    }

    #[test]
    fn closing_binds_the_type() {
        let e = parse_ra("a[P,Q]", &Signature::new(), Mode::Heterogeneous).unwrap();
        assert_eq!(
            close(&e),
            parse_fo3("forall x:P. forall y:Q. a(x,y)", Mode::Heterogeneous).unwrap()
        );
        let e = parse_ra("id[P]", &Signature::new(), Mode::Heterogeneous).unwrap();
        assert_eq!(close(&e).to_string(), "forall x:P. forall y:P. x = y");
    }
}
