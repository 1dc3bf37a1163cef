//! Bounded equivalence checking by model search.
//!
//! Stage 1 tries every model with carriers of at most `bound` elements.
//! Stage 2 escalates by one element, exhaustively when the search space is
//! small enough and by seeded sampling otherwise. The first counterexample
//! in enumeration order is reported, so verdicts do not depend on
//! scheduling.
//!
//! A sort that occurs in no predicate type and in no identity or equality
//! is held at one element: every denotation is constant along such a sort,
//! so larger carriers cannot separate the inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::compiled::{Fo3Program, RaProgram};
use super::{card_tuples, eval_fo3, spread, FiniteModel, Relation, MAX_CARD};
use crate::par::{self, Exec};
use crate::syntax::{Formula, Pred, RaExpr, Sort, Var};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("`{pred}` is used at ({}, {}) and at ({}, {})", .first.0, .first.1, .second.0, .second.1)]
    ConflictingTypes {
        pred: Pred,
        first: (Sort, Sort),
        second: (Sort, Sort),
    },
    #[error("the inputs have different types ({}, {}) and ({}, {})", .left.0, .left.1, .right.0, .right.1)]
    TypeMismatch {
        left: (Sort, Sort),
        right: (Sort, Sort),
    },
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
    #[error("search space of 2^{0} relation assignments is too large to enumerate")]
    TooLarge(u32),
    #[error("carrier bound {0} is outside 1..={MAX_CARD}")]
    BadBound(u32),
}

/// What to do after the exhaustive search up to `bound`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage2 {
    Off,
    /// Exhaustive at `bound + 1` if at most `exhaustive_limit` models,
    /// sampling otherwise.
    Auto,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    pub bound: u32,
    pub stage2: Stage2,
    pub exhaustive_limit: u64,
    pub samples: u64,
    /// Inclusive range of carrier sizes drawn when sampling.
    pub sample_cards: (u32, u32),
    pub seed: u64,
    pub exec: Exec,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            bound: 2,
            stage2: Stage2::Auto,
            exhaustive_limit: 1 << 24,
            samples: 20_000,
            sample_cards: (3, 4),
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl OracleBudget {
    /// Every model with carriers up to `bound` and nothing else.
    pub fn exhaustive(bound: u32) -> Self {
        OracleBudget {
            bound,
            stage2: Stage2::Off,
            ..Self::default()
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// No model within the budget separates the inputs. `bound` is the
    /// largest carrier size searched exhaustively.
    Valid {
        bound: u32,
        samples: u64,
    },
    Counterexample(FiniteModel),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid { .. })
    }

    pub fn counterexample(&self) -> Option<&FiniteModel> {
        match self {
            Verdict::Counterexample(m) => Some(m),
            Verdict::Valid { .. } => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid { bound, samples: 0 } => write!(f, "Valid(bound={bound})"),
            Verdict::Valid { bound, samples } => {
                write!(f, "Valid(bound={bound}, samples={samples})")
            }
            Verdict::Counterexample(m) => write!(f, "Counterexample\n{m}"),
        }
    }
}

/// The sorts and predicates the oracle has to interpret.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    /// Sorts whose carrier size can matter.
    pub live: Vec<Sort>,
    /// Sorts held at a single element.
    pub inert: Vec<Sort>,
    pub preds: Vec<(Pred, Sort, Sort)>,
}

fn note_pred(
    preds: &mut BTreeMap<Pred, (Sort, Sort)>,
    p: &Pred,
    ty: (Sort, Sort),
) -> Result<(), OracleError> {
    match preds.get(p) {
        Some(first) if *first != ty => Err(OracleError::ConflictingTypes {
            pred: p.clone(),
            first: first.clone(),
            second: ty,
        }),
        Some(_) => Ok(()),
        None => {
            preds.insert(p.clone(), ty);
            Ok(())
        }
    }
}

impl Vocabulary {
    pub fn of_ra(terms: &[&RaExpr]) -> Result<Self, OracleError> {
        let mut preds = BTreeMap::new();
        let mut sorts = BTreeSet::new();
        let mut live = BTreeSet::new();
        let mut conflict = None;
        for e in terms {
            e.visit(&mut |node| match node {
                RaExpr::Atom(p, s, t) => {
                    if let Err(err) = note_pred(&mut preds, p, (s.clone(), t.clone())) {
                        conflict.get_or_insert(err);
                    }
                }
                RaExpr::Id(s, t) => {
                    live.insert(s.clone());
                    live.insert(t.clone());
                }
                _ => {}
            });
            sorts.extend(e.sorts());
        }
        if let Some(err) = conflict {
            return Err(err);
        }
        Ok(Self::assemble(preds, sorts, live))
    }

    pub fn of_fo3(formulas: &[&Formula]) -> Result<Self, OracleError> {
        let mut preds = BTreeMap::new();
        let mut sorts = BTreeSet::new();
        let mut live = BTreeSet::new();
        for phi in formulas {
            scan_fo3(phi, &mut Vec::new(), &mut preds, &mut sorts, &mut live)?;
        }
        Ok(Self::assemble(preds, sorts, live))
    }

    fn assemble(
        preds: BTreeMap<Pred, (Sort, Sort)>,
        sorts: BTreeSet<Sort>,
        mut live: BTreeSet<Sort>,
    ) -> Self {
        for (s, t) in preds.values() {
            live.insert(s.clone());
            live.insert(t.clone());
        }
        Vocabulary {
            inert: sorts
                .iter()
                .filter(|s| !live.contains(*s))
                .cloned()
                .collect(),
            live: live.into_iter().collect(),
            preds: preds.into_iter().map(|(p, (s, t))| (p, s, t)).collect(),
        }
    }

    fn pred_index(&self, p: &Pred) -> usize {
        self.preds
            .iter()
            .position(|(q, _, _)| q == p)
            .expect("predicate in vocabulary")
    }

    fn sort_index(&self, s: &Sort) -> Option<usize> {
        self.live.iter().position(|t| t == s)
    }

    fn card_of<'a>(&'a self, cards: &'a [u32]) -> impl Fn(&Sort) -> u32 + 'a {
        move |s| self.sort_index(s).map_or(1, |i| cards[i])
    }

    fn model(&self, cards: &[u32], rels: &[u64]) -> FiniteModel {
        let mut m = FiniteModel::new();
        for (s, &k) in self.live.iter().zip(cards) {
            m.cards.insert(s.clone(), k);
        }
        for s in &self.inert {
            m.cards.insert(s.clone(), 1);
        }
        for ((p, _, _), &r) in self.preds.iter().zip(rels) {
            m.relations.insert(p.clone(), Relation(r));
        }
        m
    }
}

fn scan_fo3(
    phi: &Formula,
    scope: &mut Vec<(Var, Sort)>,
    preds: &mut BTreeMap<Pred, (Sort, Sort)>,
    sorts: &mut BTreeSet<Sort>,
    live: &mut BTreeSet<Sort>,
) -> Result<(), OracleError> {
    let lookup = |v: &Var, scope: &Vec<(Var, Sort)>| {
        scope
            .iter()
            .rev()
            .find(|(w, _)| w == v)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| OracleError::Unbound(v.clone()))
    };
    match phi {
        Formula::Atom(p, x, y) => note_pred(preds, p, (lookup(x, scope)?, lookup(y, scope)?)),
        Formula::Equals(x, y) => {
            let (sx, sy) = (lookup(x, scope)?, lookup(y, scope)?);
            if x != y {
                live.insert(sx);
                live.insert(sy);
            }
            Ok(())
        }
        Formula::True | Formula::False => Ok(()),
        Formula::Not(b) => scan_fo3(b, scope, preds, sorts, live),
        Formula::And(l, r) | Formula::Or(l, r) => {
            scan_fo3(l, scope, preds, sorts, live)?;
            scan_fo3(r, scope, preds, sorts, live)
        }
        Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
            sorts.insert(s.clone());
            scope.push((v.clone(), s.clone()));
            let result = scan_fo3(b, scope, preds, sorts, live);
            scope.pop();
            result
        }
    }
}

#[derive(Default)]
struct Scratch {
    stack: Vec<u64>,
    atoms: Vec<u64>,
}

/// A pair of inputs the search tries to separate.
trait Subject: Sync {
    type Prog: Send + Sync;
    fn prepare(&self, vocab: &Vocabulary, cards: &[u32]) -> Self::Prog;
    fn differs(
        &self,
        prog: &Self::Prog,
        vocab: &Vocabulary,
        cards: &[u32],
        rels: &[u64],
        scratch: &mut Scratch,
    ) -> bool;
}

struct RaPair<'a>(&'a RaExpr, &'a RaExpr);

impl Subject for RaPair<'_> {
    type Prog = (RaProgram, RaProgram);

    fn prepare(&self, vocab: &Vocabulary, cards: &[u32]) -> Self::Prog {
        let slot = |p: &Pred| vocab.pred_index(p);
        let card = vocab.card_of(cards);
        (
            RaProgram::compile(self.0, &slot, &card),
            RaProgram::compile(self.1, &slot, &card),
        )
    }

    fn differs(
        &self,
        prog: &Self::Prog,
        _: &Vocabulary,
        _: &[u32],
        rels: &[u64],
        scratch: &mut Scratch,
    ) -> bool {
        prog.0.run(rels, &mut scratch.stack) != prog.1.run(rels, &mut scratch.stack)
    }
}

struct Fo3Pair<'a>(&'a Formula, &'a Formula);

enum Fo3Prog {
    Compiled(Fo3Program, Fo3Program),
    Direct,
}

impl Subject for Fo3Pair<'_> {
    type Prog = Fo3Prog;

    fn prepare(&self, vocab: &Vocabulary, cards: &[u32]) -> Self::Prog {
        let slot = |p: &Pred| vocab.pred_index(p);
        let card = vocab.card_of(cards);
        match (
            Fo3Program::compile(self.0, &slot, &card),
            Fo3Program::compile(self.1, &slot, &card),
        ) {
            (Some(a), Some(b)) => Fo3Prog::Compiled(a, b),
            _ => Fo3Prog::Direct,
        }
    }

    fn differs(
        &self,
        prog: &Self::Prog,
        vocab: &Vocabulary,
        cards: &[u32],
        rels: &[u64],
        scratch: &mut Scratch,
    ) -> bool {
        match prog {
            Fo3Prog::Compiled(a, b) => {
                let x = a.run(rels, &mut scratch.atoms, &mut scratch.stack);
                let y = b.run(rels, &mut scratch.atoms, &mut scratch.stack);
                (x ^ y) & 1 == 1
            }
            Fo3Prog::Direct => {
                let m = vocab.model(cards, rels);
                let env = BTreeMap::new();
                eval_fo3(&m, self.0, &env) != eval_fo3(&m, self.1, &env)
            }
        }
    }
}

/// Checks two closed formulas for equivalence within `budget`.
pub fn check_equiv_fo3(
    phi1: &Formula,
    phi2: &Formula,
    budget: &OracleBudget,
) -> Result<Verdict, OracleError> {
    let vocab = Vocabulary::of_fo3(&[phi1, phi2])?;
    search(&Fo3Pair(phi1, phi2), &vocab, budget)
}

/// Checks two terms of the same type for equal denotations within
/// `budget`. Metavariables are treated as ordinary predicates.
pub fn check_equiv_ra(
    e1: &RaExpr,
    e2: &RaExpr,
    budget: &OracleBudget,
) -> Result<Verdict, OracleError> {
    let (t1, t2) = (e1.type_of(), e2.type_of());
    if t1 != t2 {
        return Err(OracleError::TypeMismatch {
            left: t1,
            right: t2,
        });
    }
    let vocab = Vocabulary::of_ra(&[e1, e2])?;
    search(&RaPair(e1, e2), &vocab, budget)
}

/// Relation layout for one carrier-size tuple.
struct Shape {
    cards: Vec<u32>,
    widths: Vec<u32>,
    cols: Vec<u32>,
    bits: u32,
}

impl Shape {
    fn new(vocab: &Vocabulary, cards: Vec<u32>) -> Self {
        let (widths, cols): (Vec<u32>, Vec<u32>) = {
            let card = vocab.card_of(&cards);
            vocab
                .preds
                .iter()
                .map(|(_, s, t)| (card(s) * card(t), card(t)))
                .unzip()
        };
        let bits = widths.iter().sum();
        Shape {
            cards,
            widths,
            cols,
            bits,
        }
    }

    fn decode(&self, index: u64, rels: &mut [u64]) {
        let mut shift = 0;
        for ((r, &w), &c) in rels.iter_mut().zip(&self.widths).zip(&self.cols) {
            *r = spread((index >> shift) & ((1u64 << w) - 1), c);
            shift += w;
        }
    }
}

const CHUNK: u64 = 1 << 12;

fn search<S: Subject>(
    subject: &S,
    vocab: &Vocabulary,
    budget: &OracleBudget,
) -> Result<Verdict, OracleError> {
    if !(1..=MAX_CARD).contains(&budget.bound) {
        return Err(OracleError::BadBound(budget.bound));
    }
    let n = vocab.live.len();
    let stage1: Vec<Shape> = card_tuples(n, 1, budget.bound)
        .map(|c| Shape::new(vocab, c))
        .collect();
    if let Some(m) = exhaustive(subject, vocab, &stage1, budget.exec)? {
        return Ok(Verdict::Counterexample(m));
    }
    let next = budget.bound + 1;
    if budget.stage2 == Stage2::Off || n == 0 || next > MAX_CARD {
        return Ok(Verdict::Valid {
            bound: budget.bound,
            samples: 0,
        });
    }
    if budget.stage2 == Stage2::Auto {
        let stage2: Vec<Shape> = card_tuples(n, 1, next)
            .filter(|c| c.contains(&next))
            .map(|c| Shape::new(vocab, c))
            .collect();
        let total = stage2.iter().try_fold(0u64, |acc, s| {
            (s.bits < 63).then(|| acc.saturating_add(1 << s.bits))
        });
        if total.is_some_and(|t| t <= budget.exhaustive_limit) {
            if let Some(m) = exhaustive(subject, vocab, &stage2, budget.exec)? {
                return Ok(Verdict::Counterexample(m));
            }
            return Ok(Verdict::Valid {
                bound: next,
                samples: 0,
            });
        }
    }
    if let Some(m) = sampled(subject, vocab, budget)? {
        return Ok(Verdict::Counterexample(m));
    }
    Ok(Verdict::Valid {
        bound: budget.bound,
        samples: budget.samples,
    })
}

fn exhaustive<S: Subject>(
    subject: &S,
    vocab: &Vocabulary,
    shapes: &[Shape],
    exec: Exec,
) -> Result<Option<FiniteModel>, OracleError> {
    if let Some(s) = shapes.iter().find(|s| s.bits > 40) {
        return Err(OracleError::TooLarge(s.bits));
    }
    let progs: Vec<S::Prog> = shapes
        .iter()
        .map(|s| subject.prepare(vocab, &s.cards))
        .collect();
    let mut jobs = Vec::new();
    for (i, shape) in shapes.iter().enumerate() {
        let count = 1u64 << shape.bits;
        let mut start = 0;
        while start < count {
            let end = (start + CHUNK).min(count);
            jobs.push((i, start, end));
            start = end;
        }
    }
    Ok(par::find_map_first(exec, &jobs, |&(i, start, end)| {
        let shape = &shapes[i];
        let mut rels = vec![0u64; vocab.preds.len()];
        let mut scratch = Scratch::default();
        for index in start..end {
            shape.decode(index, &mut rels);
            if subject.differs(&progs[i], vocab, &shape.cards, &rels, &mut scratch) {
                return Some(vocab.model(&shape.cards, &rels));
            }
        }
        None
    }))
}

fn sampled<S: Subject>(
    subject: &S,
    vocab: &Vocabulary,
    budget: &OracleBudget,
) -> Result<Option<FiniteModel>, OracleError> {
    let (lo, hi) = budget.sample_cards;
    let hi = hi.min(MAX_CARD);
    if lo < 1 || lo > hi {
        return Err(OracleError::BadBound(lo));
    }
    let n = vocab.live.len();
    let span = u64::from(hi - lo + 1);
    let shapes: Vec<Shape> = card_tuples(n, lo, hi)
        .map(|c| Shape::new(vocab, c))
        .collect();
    let progs: Vec<S::Prog> = shapes
        .iter()
        .map(|s| subject.prepare(vocab, &s.cards))
        .collect();
    let chunk = 256;
    let jobs: Vec<(u64, u64)> = (0..budget.samples.div_ceil(chunk))
        .map(|k| (k * chunk, ((k + 1) * chunk).min(budget.samples)))
        .collect();
    Ok(par::find_map_first(budget.exec, &jobs, |&(start, end)| {
        let mut rels = vec![0u64; vocab.preds.len()];
        let mut scratch = Scratch::default();
        for i in start..end {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(i);
            let mut shape_index = 0u64;
            for _ in 0..n {
                shape_index = shape_index * span + rng.gen_range(0..span);
            }
            let shape = &shapes[shape_index as usize];
            let card = vocab.card_of(&shape.cards);
            for (r, (_, s, t)) in rels.iter_mut().zip(&vocab.preds) {
                *r = rng.gen::<u64>() & Relation::full(card(s), card(t)).0;
            }
            if subject.differs(
                &progs[shape_index as usize],
                vocab,
                &shape.cards,
                &rels,
                &mut scratch,
            ) {
                return Some(vocab.model(&shape.cards, &rels));
            }
        }
        None
    }))
}
