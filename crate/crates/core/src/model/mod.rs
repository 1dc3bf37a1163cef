//! Finite interpretations of sorts and predicates, direct evaluation of both
//! languages, and the bounded equivalence oracle.

mod compiled;
mod oracle;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use oracle::{
    check_equiv_fo3, check_equiv_ra, OracleBudget, OracleError, Stage2, Verdict, Vocabulary,
};

use crate::parser::{tokenize, Parser, SourceError, Tok};
use crate::syntax::{Formula, Pred, RaExpr, Signature, Sort, Var};

/// Largest carrier a [`Relation`] can hold.
pub const MAX_CARD: u32 = 8;

const STRIDE: u32 = 8;

/// A binary relation over `0..8 x 0..8`, stored as an 8x8 bit matrix with
/// pair `(i, j)` at bit `8 * i + j`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation(pub u64);

const fn row_mask(cols: u32) -> u64 {
    if cols >= 8 {
        0xff
    } else {
        (1u64 << cols) - 1
    }
}

impl Relation {
    pub const EMPTY: Relation = Relation(0);

    /// Every pair in `0..rows x 0..cols`.
    pub fn full(rows: u32, cols: u32) -> Relation {
        let row = row_mask(cols);
        Relation((0..rows).fold(0, |acc, i| acc | row << (STRIDE * i)))
    }

    /// `{(i, i) | i < min(rows, cols)}`.
    pub fn identity(rows: u32, cols: u32) -> Relation {
        Relation((0..rows.min(cols)).fold(0, |acc, i| acc | 1 << (9 * i)))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Relation {
        let mut r = Relation::EMPTY;
        for (i, j) in pairs {
            r.insert(i, j);
        }
        r
    }

    pub fn contains(self, i: u32, j: u32) -> bool {
        i < MAX_CARD && j < MAX_CARD && self.0 >> (STRIDE * i + j) & 1 == 1
    }

    pub fn insert(&mut self, i: u32, j: u32) {
        assert!(i < MAX_CARD && j < MAX_CARD, "element out of range");
        self.0 |= 1 << (STRIDE * i + j);
    }

    pub fn pairs(self) -> impl Iterator<Item = (u32, u32)> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let b = bits.trailing_zeros();
            bits &= bits - 1;
            Some((b / STRIDE, b % STRIDE))
        })
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Relation) -> Relation {
        Relation(self.0 | other.0)
    }

    pub fn intersection(self, other: Relation) -> Relation {
        Relation(self.0 & other.0)
    }

    /// Complement within `0..rows x 0..cols`.
    pub fn complement(self, rows: u32, cols: u32) -> Relation {
        Relation(Relation::full(rows, cols).0 & !self.0)
    }

    pub fn converse(self) -> Relation {
        Relation(transpose(self.0))
    }

    /// Relational composition; `rows` bounds the rows of `self`.
    pub fn compose(self, other: Relation, rows: u32) -> Relation {
        Relation(compose_bits(self.0, other.0, rows))
    }

    pub fn is_subset(self, other: Relation) -> bool {
        self.0 & !other.0 == 0
    }
}

#[inline]
pub(crate) fn compose_bits(lhs: u64, rhs: u64, rows: u32) -> u64 {
    let mut out = 0;
    for i in 0..rows {
        let mut row = (lhs >> (STRIDE * i)) & 0xff;
        let mut acc = 0;
        while row != 0 {
            let j = row.trailing_zeros();
            row &= row - 1;
            acc |= (rhs >> (STRIDE * j)) & 0xff;
        }
        out |= acc << (STRIDE * i);
    }
    out
}

/// Transpose of an 8x8 bit matrix.
#[inline]
pub(crate) fn transpose(mut x: u64) -> u64 {
    let t = (x ^ (x >> 7)) & 0x00aa_00aa_00aa_00aa;
    x ^= t ^ (t << 7);
    let t = (x ^ (x >> 14)) & 0x0000_cccc_0000_cccc;
    x ^= t ^ (t << 14);
    let t = (x ^ (x >> 28)) & 0x0000_0000_f0f0_f0f0;
    x ^= t ^ (t << 28);
    x
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pairs()).finish()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, (i, j)) in self.pairs().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "({i},{j})")?;
        }
        f.write_str("}")
    }
}

/// Carriers `0..k` for each sort and a relation for each predicate.
/// Predicates without an entry denote the empty relation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FiniteModel {
    pub cards: BTreeMap<Sort, u32>,
    pub relations: BTreeMap<Pred, Relation>,
}

impl FiniteModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sort(mut self, sort: &str, card: u32) -> Self {
        self.set_card(Sort::new(sort), card);
        self
    }

    pub fn with_relation(mut self, pred: &str, pairs: &[(u32, u32)]) -> Self {
        self.relations
            .insert(Pred::new(pred), Relation::from_pairs(pairs.iter().copied()));
        self
    }

    pub fn set_card(&mut self, sort: Sort, card: u32) {
        assert!(
            (1..=MAX_CARD).contains(&card),
            "carrier size must be in 1..=8"
        );
        self.cards.insert(sort, card);
    }

    /// Size of the carrier of `sort`. Sorts the model does not mention have
    /// a single element.
    pub fn card(&self, sort: &Sort) -> u32 {
        self.cards.get(sort).copied().unwrap_or(1)
    }

    pub fn relation(&self, pred: &Pred) -> Relation {
        self.relations.get(pred).copied().unwrap_or_default()
    }

    /// Checks that every relation fits the carriers of its declared type.
    pub fn respects(&self, sig: &Signature) -> bool {
        self.relations
            .iter()
            .all(|(p, r)| match sig.predicate_type(p) {
                Some((s, t)) => r.is_subset(Relation::full(self.card(&s), self.card(&t))),
                None => false,
            })
    }
}

impl fmt::Display for FiniteModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (sort, &card) in &self.cards {
            write!(f, "sort {sort} = {{")?;
            for k in 0..card {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{k}")?;
            }
            f.write_str("}\n")?;
        }
        for (pred, rel) in &self.relations {
            writeln!(f, "rel {pred} = {rel}")?;
        }
        Ok(())
    }
}

impl FromStr for FiniteModel {
    type Err = SourceError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let toks = tokenize(text)?;
        let mut p = Parser::new(&toks, false);
        let mut model = FiniteModel::new();
        loop {
            while p.eat(&Tok::Newline) {}
            if *p.peek() == Tok::Eof {
                break;
            }
            let (kw, pos) = p.ident("`sort` or `rel`")?;
            let (name, _) = p.ident("a name")?;
            p.expect(&Tok::Eq)?;
            p.expect(&Tok::LBrace)?;
            match kw.as_str() {
                "sort" => {
                    let mut card = 0u32;
                    while *p.peek() != Tok::RBrace {
                        if card > 0 {
                            p.expect(&Tok::Comma)?;
                        }
                        let at = p.pos();
                        let n = p.number()?;
                        if n != u64::from(card) || card >= MAX_CARD {
                            return Err(SourceError {
                                line: at.line,
                                column: at.column,
                                message: "elements must be listed as 0,1,...,k-1 with k <= 8"
                                    .into(),
                                expected: Vec::new(),
                            });
                        }
                        card += 1;
                    }
                    if card == 0 {
                        return Err(p.unexpected(&["an element"]));
                    }
                    model.cards.insert(Sort::new(&name), card);
                }
                "rel" => {
                    let mut rel = Relation::EMPTY;
                    let mut first = true;
                    while *p.peek() != Tok::RBrace {
                        if !first {
                            p.expect(&Tok::Comma)?;
                        }
                        first = false;
                        p.expect(&Tok::LParen)?;
                        let at = p.pos();
                        let i = p.number()?;
                        p.expect(&Tok::Comma)?;
                        let j = p.number()?;
                        p.expect(&Tok::RParen)?;
                        if i >= u64::from(MAX_CARD) || j >= u64::from(MAX_CARD) {
                            return Err(SourceError {
                                line: at.line,
                                column: at.column,
                                message: "element out of range".into(),
                                expected: Vec::new(),
                            });
                        }
                        rel.insert(i as u32, j as u32);
                    }
                    model.relations.insert(Pred::new(&name), rel);
                }
                _ => {
                    return Err(SourceError {
                        line: pos.line,
                        column: pos.column,
                        message: format!("unknown entry `{kw}`"),
                        expected: vec!["`sort`".into(), "`rel`".into()],
                    })
                }
            }
            p.expect(&Tok::RBrace)?;
            if !p.at_end() {
                return Err(p.unexpected(&["end of line"]));
            }
        }
        Ok(model)
    }
}

/// Denotation of a relation term. The term must be well-typed; carrier
/// sizes are taken from `m`.
pub fn eval_ra(m: &FiniteModel, e: &RaExpr) -> Relation {
    match e {
        RaExpr::Atom(p, _, _) => m.relation(p),
        RaExpr::Top(s, t) => Relation::full(m.card(s), m.card(t)),
        RaExpr::Bot(..) => Relation::EMPTY,
        RaExpr::Id(s, t) => Relation::identity(m.card(s), m.card(t)),
        RaExpr::Union(l, r) => eval_ra(m, l).union(eval_ra(m, r)),
        RaExpr::Intersection(l, r) => eval_ra(m, l).intersection(eval_ra(m, r)),
        RaExpr::Compose(l, r) => eval_ra(m, l).compose(eval_ra(m, r), m.card(&l.source())),
        RaExpr::Dagger(l, r) => {
            let (s, k, t) = (
                m.card(&l.source()),
                m.card(&l.target()),
                m.card(&r.target()),
            );
            let nl = eval_ra(m, l).complement(s, k);
            let nr = eval_ra(m, r).complement(k, t);
            nl.compose(nr, s).complement(s, t)
        }
        RaExpr::Complement(b) => {
            let (s, t) = b.type_of();
            eval_ra(m, b).complement(m.card(&s), m.card(&t))
        }
        RaExpr::Converse(b) => eval_ra(m, b).converse(),
    }
}

/// Whether `e` denotes the full relation on its type.
pub fn ra_holds(m: &FiniteModel, e: &RaExpr) -> bool {
    let (s, t) = e.type_of();
    eval_ra(m, e) == Relation::full(m.card(&s), m.card(&t))
}

/// Truth of `φ` under `env`. Quantifiers range over the carrier of their
/// sort; equality compares element indices.
///
/// Panics if a free variable of `φ` is missing from `env`.
pub fn eval_fo3(m: &FiniteModel, phi: &Formula, env: &BTreeMap<Var, u32>) -> bool {
    let mut scope: Vec<(Var, u32)> = env.iter().map(|(v, &k)| (v.clone(), k)).collect();
    eval_in(m, phi, &mut scope)
}

fn eval_in(m: &FiniteModel, phi: &Formula, scope: &mut Vec<(Var, u32)>) -> bool {
    let get = |v: &Var, scope: &Vec<(Var, u32)>| {
        scope
            .iter()
            .rev()
            .find(|(w, _)| w == v)
            .map(|&(_, k)| k)
            .unwrap_or_else(|| panic!("variable `{v}` is unbound"))
    };
    match phi {
        Formula::Atom(p, x, y) => m.relation(p).contains(get(x, scope), get(y, scope)),
        Formula::Equals(x, y) => get(x, scope) == get(y, scope),
        Formula::True => true,
        Formula::False => false,
        Formula::Or(l, r) => eval_in(m, l, scope) || eval_in(m, r, scope),
        Formula::And(l, r) => eval_in(m, l, scope) && eval_in(m, r, scope),
        Formula::Not(b) => !eval_in(m, b, scope),
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            let want = matches!(phi, Formula::Exists(..));
            for k in 0..m.card(s) {
                scope.push((v.clone(), k));
                let value = eval_in(m, b, scope);
                scope.pop();
                if value == want {
                    return want;
                }
            }
            !want
        }
    }
}

/// Every model of `sig` whose carriers have between 1 and `max_card`
/// elements, with all relation assignments. Carrier sizes vary slowest, in
/// lexicographic order of the sorted sort names; relation assignments are
/// then counted up in binary.
pub fn enumerate_models(sig: &Signature, max_card: u32) -> impl Iterator<Item = FiniteModel> {
    assert!(
        (1..=MAX_CARD).contains(&max_card),
        "max_card must be in 1..=8"
    );
    let sorts: Vec<Sort> = sig.sorts().cloned().collect();
    let preds: Vec<(Pred, usize, usize)> = sig
        .predicates()
        .map(|(p, (s, t))| {
            let idx = |x: &Sort| sorts.iter().position(|y| y == x).expect("declared sort");
            (p.clone(), idx(s), idx(t))
        })
        .collect();
    card_tuples(sorts.len(), 1, max_card).flat_map(move |cards| {
        let sorts = sorts.clone();
        let preds = preds.clone();
        let widths: Vec<u32> = preds.iter().map(|&(_, s, t)| cards[s] * cards[t]).collect();
        let total: u32 = widths.iter().sum();
        assert!(total < 64, "too many relation bits to enumerate");
        (0..1u64 << total).map(move |index| {
            let mut model = FiniteModel::new();
            for (sort, &card) in sorts.iter().zip(&cards) {
                model.cards.insert(sort.clone(), card);
            }
            let mut shift = 0;
            for ((pred, _, t), &w) in preds.iter().zip(&widths) {
                let dense = (index >> shift) & ((1u64 << w) - 1);
                model
                    .relations
                    .insert(pred.clone(), Relation(spread(dense, cards[*t])));
                shift += w;
            }
            model
        })
    })
}

/// All tuples of length `n` over `lo..=hi`, last position varying fastest.
pub(crate) fn card_tuples(n: usize, lo: u32, hi: u32) -> impl Iterator<Item = Vec<u32>> {
    let count = u64::from(hi - lo + 1).pow(n as u32);
    (0..count).map(move |mut index| {
        let mut t = vec![lo; n];
        for slot in t.iter_mut().rev() {
            *slot = lo + (index % u64::from(hi - lo + 1)) as u32;
            index /= u64::from(hi - lo + 1);
        }
        t
    })
}

/// Lays out densely packed rows of width `cols` at stride 8.
#[inline]
pub(crate) fn spread(dense: u64, cols: u32) -> u64 {
    if cols == STRIDE {
        return dense;
    }
    let mask = row_mask(cols);
    let mut out = 0;
    let mut rest = dense;
    let mut i = 0;
    while rest != 0 {
        out |= (rest & mask) << (STRIDE * i);
        rest >>= cols;
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_fo3, parse_ra};
    use crate::syntax::Mode;

    fn hom(s: &str) -> RaExpr {
        parse_ra(s, &Signature::homogeneous(), Mode::Homogeneous).unwrap()
    }

    #[test]
    fn transpose_matches_definition() {
        let r = Relation::from_pairs([(0, 1), (2, 7), (5, 5), (7, 0)]);
        let t = r.converse();
        let expected = Relation::from_pairs(r.pairs().map(|(i, j)| (j, i)));
        assert_eq!(t, expected);
        assert_eq!(t.converse(), r);
    }

    #[test]
    fn identity_and_complement() {
        let m = FiniteModel::new().with_sort("P", 2).with_sort("Q", 3);
        let id = parse_ra("id[P]", &Signature::new(), Mode::Heterogeneous).unwrap();
        assert_eq!(eval_ra(&m, &id), Relation::from_pairs([(0, 0), (1, 1)]));
        let nbot = parse_ra("~bot[P,Q]", &Signature::new(), Mode::Heterogeneous).unwrap();
        assert_eq!(eval_ra(&m, &nbot), Relation::full(2, 3));
        assert_eq!(eval_ra(&m, &nbot).len(), 6);
    }

    #[test]
    fn composition_has_one_witness() {
        let m = FiniteModel::new()
            .with_sort("U", 2)
            .with_relation("a", &[(0, 1)])
            .with_relation("b", &[(1, 0)]);
        assert_eq!(eval_ra(&m, &hom("a ; b")), Relation::from_pairs([(0, 0)]));
    }

    #[test]
    fn truth_constants_hold_as_expected() {
        let m = FiniteModel::new().with_sort("P", 2).with_sort("Q", 1);
        let sig = Signature::new();
        assert!(ra_holds(
            &m,
            &parse_ra("top[P,Q]", &sig, Mode::Heterogeneous).unwrap()
        ));
        assert!(!ra_holds(
            &m,
            &parse_ra("bot[P,Q]", &sig, Mode::Heterogeneous).unwrap()
        ));
    }

    #[test]
    fn formulas_evaluate() {
        let phi = parse_fo3("exists x. exists y. A(x,x) & A(y,y)", Mode::Homogeneous).unwrap();
        let full = FiniteModel::new()
            .with_sort("U", 1)
            .with_relation("A", &[(0, 0)]);
        let empty = FiniteModel::new().with_sort("U", 1);
        assert!(eval_fo3(&full, &phi, &BTreeMap::new()));
        assert!(!eval_fo3(&empty, &phi, &BTreeMap::new()));
        let refl = parse_fo3("forall x. x = x", Mode::Homogeneous).unwrap();
        assert!(eval_fo3(
            &full.clone().with_sort("U", 3),
            &refl,
            &BTreeMap::new()
        ));
    }

    #[test]
    fn model_counts() {
        let mut sig = Signature::homogeneous();
        sig.add_predicate(Pred::new("A"), Sort::universal(), Sort::universal())
            .unwrap();
        assert_eq!(enumerate_models(&sig, 1).count(), 2);
        assert_eq!(enumerate_models(&sig, 2).count(), 18);
        assert_eq!(enumerate_models(&Signature::homogeneous(), 1).count(), 1);
        assert!(enumerate_models(&sig, 2).all(|m| m.respects(&sig)));
    }

    #[test]
    fn text_format_round_trips() {
        let m = FiniteModel::new()
            .with_sort("P", 2)
            .with_sort("Q", 1)
            .with_relation("A", &[(0, 0), (1, 0)]);
        let text = m.to_string();
        assert_eq!(
            text,
            "sort P = {0,1}\nsort Q = {0}\nrel A = {(0,0),(1,0)}\n"
        );
        assert_eq!(text.parse::<FiniteModel>().unwrap(), m);
        assert!("sort P = {1}".parse::<FiniteModel>().is_err());
        assert!("rel A = {(0,9)}".parse::<FiniteModel>().is_err());
    }

    #[test]
    fn spread_places_rows_at_stride() {
        assert_eq!(spread(0b111_111, 3), 0b111 | 0b111 << 8);
        assert_eq!(spread(0b10, 1), 1 << 8);
    }
}
