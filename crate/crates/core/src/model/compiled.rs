//! Straight-line programs for evaluating a term or formula over many models
//! with fixed carrier sizes. Relations are 8x8 bit matrices; a formula over
//! three variable slots is evaluated for all 64 assignments at once, slot
//! `s` holding a value in `0..4` at bit stride `4^s`.

use super::{compose_bits, transpose, Relation};
use crate::syntax::{Formula, Pred, RaExpr, Sort, Var};

#[derive(Clone, Debug)]
enum RaInstr {
    Load(usize),
    Const(u64),
    Not(u64),
    Converse,
    Union,
    Inter,
    Compose(u32),
    Dagger {
        rows: u32,
        left: u64,
        right: u64,
        out: u64,
    },
}

/// A term compiled against concrete carrier sizes.
#[derive(Clone, Debug)]
pub(crate) struct RaProgram {
    code: Vec<RaInstr>,
}

impl RaProgram {
    /// `pred_slot` maps predicates to positions in the relation array passed
    /// to [`run`](Self::run); `card` gives carrier sizes.
    pub(crate) fn compile(
        e: &RaExpr,
        pred_slot: &impl Fn(&Pred) -> usize,
        card: &impl Fn(&Sort) -> u32,
    ) -> Self {
        let mut code = Vec::with_capacity(e.size());
        emit_ra(e, pred_slot, card, &mut code);
        RaProgram { code }
    }

    pub(crate) fn run(&self, rels: &[u64], stack: &mut Vec<u64>) -> u64 {
        stack.clear();
        for instr in &self.code {
            match *instr {
                RaInstr::Load(i) => stack.push(rels[i]),
                RaInstr::Const(c) => stack.push(c),
                RaInstr::Not(full) => {
                    let top = stack.last_mut().unwrap();
                    *top = full & !*top;
                }
                RaInstr::Converse => {
                    let top = stack.last_mut().unwrap();
                    *top = transpose(*top);
                }
                RaInstr::Union | RaInstr::Inter | RaInstr::Compose(_) | RaInstr::Dagger { .. } => {
                    let r = stack.pop().unwrap();
                    let l = stack.pop().unwrap();
                    stack.push(match *instr {
                        RaInstr::Union => l | r,
                        RaInstr::Inter => l & r,
                        RaInstr::Compose(rows) => compose_bits(l, r, rows),
                        RaInstr::Dagger {
                            rows,
                            left,
                            right,
                            out,
                        } => out & !compose_bits(left & !l, right & !r, rows),
                        _ => unreachable!(),
                    });
                }
            }
        }
        stack.pop().unwrap()
    }
}

fn emit_ra(
    e: &RaExpr,
    pred_slot: &impl Fn(&Pred) -> usize,
    card: &impl Fn(&Sort) -> u32,
    code: &mut Vec<RaInstr>,
) {
    let full = |s: &Sort, t: &Sort| Relation::full(card(s), card(t)).0;
    match e {
        RaExpr::Atom(p, _, _) => code.push(RaInstr::Load(pred_slot(p))),
        RaExpr::Top(s, t) => code.push(RaInstr::Const(full(s, t))),
        RaExpr::Bot(..) => code.push(RaInstr::Const(0)),
        RaExpr::Id(s, t) => code.push(RaInstr::Const(Relation::identity(card(s), card(t)).0)),
        RaExpr::Complement(b) => {
            emit_ra(b, pred_slot, card, code);
            let (s, t) = b.type_of();
            code.push(RaInstr::Not(full(&s, &t)));
        }
        RaExpr::Converse(b) => {
            emit_ra(b, pred_slot, card, code);
            code.push(RaInstr::Converse);
        }
        RaExpr::Union(l, r)
        | RaExpr::Intersection(l, r)
        | RaExpr::Compose(l, r)
        | RaExpr::Dagger(l, r) => {
            emit_ra(l, pred_slot, card, code);
            emit_ra(r, pred_slot, card, code);
            let rows = card(&l.source());
            code.push(match e {
                RaExpr::Union(..) => RaInstr::Union,
                RaExpr::Intersection(..) => RaInstr::Inter,
                RaExpr::Compose(..) => RaInstr::Compose(rows),
                _ => {
                    let (s, k, t) = (l.source(), l.target(), r.target());
                    RaInstr::Dagger {
                        rows,
                        left: full(&s, &k),
                        right: full(&k, &t),
                        out: full(&s, &t),
                    }
                }
            });
        }
    }
}

/// Largest carrier the slot encoding supports.
pub(crate) const FO3_MAX_CARD: u32 = 4;
const SLOTS: usize = 3;

/// `SLOT_VALUE[s][k]`: assignments where slot `s` holds `k`.
const SLOT_VALUE: [[u64; 4]; SLOTS] = slot_value_masks();

const fn slot_value_masks() -> [[u64; 4]; SLOTS] {
    let mut out = [[0u64; 4]; SLOTS];
    let mut bit = 0;
    while bit < 64 {
        let mut s = 0;
        while s < SLOTS {
            let k = (bit >> (2 * s)) & 3;
            out[s][k] |= 1 << bit;
            s += 1;
        }
        bit += 1;
    }
    out
}

const fn stride(slot: usize) -> u32 {
    1 << (2 * slot)
}

fn equal_mask(u: usize, v: usize) -> u64 {
    (0..4).fold(0, |acc, k| acc | (SLOT_VALUE[u][k] & SLOT_VALUE[v][k]))
}

#[derive(Clone, Debug)]
enum FoInstr {
    Atom(usize),
    Const(u64),
    Not,
    And,
    Or,
    Exists { slot: usize, card: u32 },
    Forall { slot: usize, card: u32 },
}

/// A formula with at most three variable names, compiled against carrier
/// sizes of at most four.
#[derive(Clone, Debug)]
pub(crate) struct Fo3Program {
    code: Vec<FoInstr>,
    /// `(predicate slot, argument slot, argument slot)` of each atom kind.
    keys: Vec<(usize, usize, usize)>,
    vars: Vec<Var>,
}

impl Fo3Program {
    /// `None` when the formula uses more than three variable names or a
    /// quantifier ranges over more than four elements.
    pub(crate) fn compile(
        phi: &Formula,
        pred_slot: &impl Fn(&Pred) -> usize,
        card: &impl Fn(&Sort) -> u32,
    ) -> Option<Self> {
        let mut prog = Fo3Program {
            code: Vec::new(),
            keys: Vec::new(),
            vars: Vec::new(),
        };
        prog.emit(phi, pred_slot, card)?;
        Some(prog)
    }

    fn slot(&mut self, v: &Var) -> Option<usize> {
        if let Some(i) = self.vars.iter().position(|w| w == v) {
            return Some(i);
        }
        if self.vars.len() == SLOTS {
            return None;
        }
        self.vars.push(v.clone());
        Some(self.vars.len() - 1)
    }

    fn emit(
        &mut self,
        phi: &Formula,
        pred_slot: &impl Fn(&Pred) -> usize,
        card: &impl Fn(&Sort) -> u32,
    ) -> Option<()> {
        match phi {
            Formula::Atom(p, x, y) => {
                let key = (pred_slot(p), self.slot(x)?, self.slot(y)?);
                let idx = match self.keys.iter().position(|k| *k == key) {
                    Some(i) => i,
                    None => {
                        self.keys.push(key);
                        self.keys.len() - 1
                    }
                };
                self.code.push(FoInstr::Atom(idx));
            }
            Formula::Equals(x, y) => {
                let (u, v) = (self.slot(x)?, self.slot(y)?);
                self.code.push(FoInstr::Const(equal_mask(u, v)));
            }
            Formula::True => self.code.push(FoInstr::Const(!0)),
            Formula::False => self.code.push(FoInstr::Const(0)),
            Formula::Not(b) => {
                self.emit(b, pred_slot, card)?;
                self.code.push(FoInstr::Not);
            }
            Formula::And(l, r) | Formula::Or(l, r) => {
                self.emit(l, pred_slot, card)?;
                self.emit(r, pred_slot, card)?;
                self.code.push(if matches!(phi, Formula::And(..)) {
                    FoInstr::And
                } else {
                    FoInstr::Or
                });
            }
            Formula::Exists(v, s, b) | Formula::Forall(v, s, b) => {
                let slot = self.slot(v)?;
                let n = card(s);
                if n > FO3_MAX_CARD {
                    return None;
                }
                self.emit(b, pred_slot, card)?;
                self.code.push(if matches!(phi, Formula::Exists(..)) {
                    FoInstr::Exists { slot, card: n }
                } else {
                    FoInstr::Forall { slot, card: n }
                });
            }
        }
        Some(())
    }

    /// Satisfying assignments of all slots; bit `a + 4b + 16c` for slot
    /// values `(a, b, c)`. A closed formula is true iff bit 0 is set.
    pub(crate) fn run(&self, rels: &[u64], atoms: &mut Vec<u64>, stack: &mut Vec<u64>) -> u64 {
        atoms.clear();
        atoms.extend(self.keys.iter().map(|&(p, u, v)| atom_mask(rels[p], u, v)));
        stack.clear();
        for instr in &self.code {
            match *instr {
                FoInstr::Atom(i) => stack.push(atoms[i]),
                FoInstr::Const(c) => stack.push(c),
                FoInstr::Not => {
                    let top = stack.last_mut().unwrap();
                    *top = !*top;
                }
                FoInstr::And => {
                    let r = stack.pop().unwrap();
                    *stack.last_mut().unwrap() &= r;
                }
                FoInstr::Or => {
                    let r = stack.pop().unwrap();
                    *stack.last_mut().unwrap() |= r;
                }
                FoInstr::Exists { slot, card } => {
                    let top = stack.last_mut().unwrap();
                    let mut acc = 0;
                    for k in 0..card {
                        acc |= (*top & SLOT_VALUE[slot][k as usize]) >> (k * stride(slot));
                    }
                    *top = broadcast(acc, slot);
                }
                FoInstr::Forall { slot, card } => {
                    let top = stack.last_mut().unwrap();
                    let mut acc = SLOT_VALUE[slot][0];
                    for k in 0..card {
                        acc &= (*top & SLOT_VALUE[slot][k as usize]) >> (k * stride(slot));
                    }
                    *top = broadcast(acc, slot);
                }
            }
        }
        stack.pop().unwrap()
    }
}

#[inline]
fn broadcast(zero_slice: u64, slot: usize) -> u64 {
    let s = stride(slot);
    zero_slice | zero_slice << s | zero_slice << (2 * s) | zero_slice << (3 * s)
}

/// Assignments under which `rel(slot u, slot v)` holds.
#[inline]
fn atom_mask(rel: u64, u: usize, v: usize) -> u64 {
    let mut out = 0;
    let mut bits = rel;
    while bits != 0 {
        let b = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let (i, j) = (b / 8, b % 8);
        if i >= 4 || j >= 4 {
            continue;
        }
        if u == v {
            if i == j {
                out |= SLOT_VALUE[u][i];
            }
        } else {
            out |= SLOT_VALUE[u][i] & SLOT_VALUE[v][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_fo3, eval_ra, FiniteModel};
    use crate::parser::{parse_fo3, parse_ra};
    use crate::syntax::{Mode, Signature};
    use std::collections::BTreeMap;

    #[test]
    fn slot_masks_partition_the_assignments() {
        for s in 0..SLOTS {
            assert_eq!(SLOT_VALUE[s].iter().fold(0, |a, m| a | m), !0);
            assert_eq!(
                SLOT_VALUE[s].iter().map(|m| m.count_ones()).sum::<u32>(),
                64
            );
        }
        assert_eq!(equal_mask(1, 1), !0);
        assert_eq!(equal_mask(0, 2).count_ones(), 16);
    }

    #[test]
    fn ra_program_agrees_with_direct_evaluation() {
        let e = parse_ra(
            "~(a ; b^) + (a & id) | top ; b",
            &Signature::homogeneous(),
            Mode::Homogeneous,
        )
        .unwrap();
        let m = FiniteModel::new()
            .with_sort("U", 3)
            .with_relation("a", &[(0, 1), (2, 2)])
            .with_relation("b", &[(1, 0), (1, 2)]);
        let names = ["a", "b"];
        let slot = |p: &Pred| names.iter().position(|n| *n == p.as_str()).unwrap();
        let prog = RaProgram::compile(&e, &slot, &|_| 3);
        let rels = [m.relation(&Pred::new("a")).0, m.relation(&Pred::new("b")).0];
        assert_eq!(prog.run(&rels, &mut Vec::new()), eval_ra(&m, &e).0);
    }

    #[test]
    fn fo3_program_agrees_with_direct_evaluation() {
        let phi = parse_fo3(
            "forall x. exists y. (A(x,y) | x = y) & ~(forall z. A(z,y) | A(y,z))",
            Mode::Homogeneous,
        )
        .unwrap();
        for card in 1..=4 {
            for seed in 0..40u64 {
                let bits = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) & Relation::full(card, card).0;
                let m = FiniteModel {
                    cards: BTreeMap::from([(Sort::universal(), card)]),
                    relations: BTreeMap::from([(Pred::new("A"), Relation(bits))]),
                };
                let prog = Fo3Program::compile(&phi, &|_| 0, &|_| card).unwrap();
                let got = prog.run(&[bits], &mut Vec::new(), &mut Vec::new()) & 1 == 1;
                assert_eq!(
                    got,
                    eval_fo3(&m, &phi, &BTreeMap::new()),
                    "card {card} bits {bits:x}"
                );
            }
        }
    }

    #[test]
    fn too_many_names_do_not_compile() {
        let phi = parse_fo3(
            "exists a. exists b. exists c. exists d. R(a,d)",
            Mode::Homogeneous,
        )
        .unwrap();
        assert!(Fo3Program::compile(&phi, &|_| 0, &|_| 2).is_none());
    }
}
