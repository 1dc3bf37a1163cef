//! Mining rewrite rules by enumeration and oracle validation, and lifting
//! homogeneous rules to typed ones.
//!
//! Candidate pairs are found by bucketing patterns on their denotations in a
//! fixed set of random models; only pairs that agree there reach the oracle.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{check_equiv_ra, eval_ra, FiniteModel, OracleBudget, OracleError, Relation};
use crate::par::{self, Exec};
use crate::simplify::{
    compile_rules, load_rules, RewriteRule, RuleError, RuleFileError, Simplifier,
};
use crate::syntax::{Mode, Pred, RaExpr, RaOp, Sort};

#[derive(Debug, Error)]
pub enum MineError {
    #[error("max_lhs_size must be at least 2, got {0}")]
    SizeTooSmall(usize),
    #[error("max_metavars must be between 1 and 4, got {0}")]
    BadMetavars(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    File(#[from] RuleFileError),
}

#[derive(Clone, Debug)]
pub struct MinerConfig {
    pub max_lhs_size: usize,
    pub max_metavars: usize,
    pub budget: OracleBudget,
    /// Checkpoint file, rewritten after every size stage.
    pub out: Option<PathBuf>,
    /// Continue from the checkpoint in `out` if it exists.
    pub resume: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_lhs_size: 5,
            max_metavars: 3,
            budget: OracleBudget::default(),
            out: None,
            resume: false,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MineError> {
        if self.max_lhs_size < 2 {
            return Err(MineError::SizeTooSmall(self.max_lhs_size));
        }
        if !(1..=4).contains(&self.max_metavars) {
            return Err(MineError::BadMetavars(self.max_metavars));
        }
        Ok(())
    }
}

/// `A`, `B`, ... as homogeneous atoms.
pub fn metavariables(n: usize) -> Vec<RaExpr> {
    (b'A'..)
        .take(n)
        .map(|c| RaExpr::hom(&(c as char).to_string()))
        .collect()
}

/// Every homogeneous pattern of each size up to `max`, over the given
/// metavariables, in enumeration order: leaves, then complement and
/// converse, then the binary operators by split point.
fn enumerate_by_size(max: usize, names: usize) -> Vec<Vec<RaExpr>> {
    let u = || Sort::universal();
    let mut table: Vec<Vec<RaExpr>> = vec![Vec::new()];
    if max == 0 {
        return table;
    }
    let mut leaves = metavariables(names);
    leaves.extend([
        RaExpr::Top(u(), u()),
        RaExpr::Bot(u(), u()),
        RaExpr::Id(u(), u()),
    ]);
    table.push(leaves);
    for n in 2..=max {
        let mut out = Vec::new();
        for op in RaOp::UNARY {
            out.extend(table[n - 1].iter().map(|b| RaExpr::unary(op, b.clone())));
        }
        for op in RaOp::BINARY {
            for left in 1..n - 1 {
                for l in &table[left] {
                    for r in &table[n - 1 - left] {
                        out.push(RaExpr::binary(op, l.clone(), r.clone()));
                    }
                }
            }
        }
        table.push(out);
    }
    table
}

/// Metavariables appear in alphabetical order of first occurrence.
pub fn is_canonical(p: &RaExpr) -> bool {
    let mut next = b'A';
    let mut ok = true;
    p.visit(&mut |node| {
        if let RaExpr::Atom(m, _, _) = node {
            let c = m.as_str().as_bytes()[0];
            if c == next {
                next += 1;
            } else if c > next {
                ok = false;
            }
        }
    });
    ok
}

/// Patterns of exactly `size` nodes, one per renaming class of metavariables.
pub fn enumerate_patterns(size: usize, max_metavars: usize) -> Vec<RaExpr> {
    if size == 0 {
        return Vec::new();
    }
    enumerate_by_size(size, max_metavars)
        .swap_remove(size)
        .into_iter()
        .filter(is_canonical)
        .collect()
}

const FINGERPRINT_MODELS: usize = 48;

/// Random models over `U` used to bucket patterns by denotation.
fn fingerprint_models(names: usize) -> Vec<FiniteModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..FINGERPRINT_MODELS)
        .map(|i| {
            let card = [1, 2, 3, 3][i % 4];
            let mut m = FiniteModel::new();
            m.set_card(Sort::universal(), card);
            for meta in metavariables(names) {
                let RaExpr::Atom(p, _, _) = meta else {
                    unreachable!()
                };
                let bits = rng.gen::<u64>() & Relation::full(card, card).0;
                m.relations.insert(p, Relation(bits));
            }
            m
        })
        .collect()
}

fn fingerprint(models: &[FiniteModel], p: &RaExpr) -> Vec<u64> {
    models.iter().map(|m| eval_ra(m, p).0).collect()
}

fn occurs_within(psi: &RaExpr, phi: &RaExpr) -> bool {
    let have = phi.predicate_counts();
    psi.predicate_counts()
        .iter()
        .all(|(p, n)| have.get(p).is_some_and(|m| m >= n))
}

/// Pairs `(phi, psi)` with `phi` canonical of size `n`, `psi` smaller, no
/// metavariable more frequent in `psi`, both normal under `prior`, and equal
/// denotations on the fingerprint models. Grouped by `phi`; each group lists
/// `psi` by size, then enumeration order.
pub fn candidate_pairs(
    n: usize,
    max_metavars: usize,
    prior: &Simplifier,
) -> Vec<(RaExpr, Vec<RaExpr>)> {
    let table = enumerate_by_size(n, max_metavars);
    let models = fingerprint_models(max_metavars);
    let mut index: HashMap<Vec<u64>, Vec<&RaExpr>> = HashMap::new();
    for psi in table[1..n].iter().flatten().filter(|p| prior.is_normal(p)) {
        index
            .entry(fingerprint(&models, psi))
            .or_default()
            .push(psi);
    }
    table[n]
        .iter()
        .filter(|phi| is_canonical(phi) && prior.is_normal(phi))
        .filter_map(|phi| {
            let bucket = index.get(&fingerprint(&models, phi))?;
            let psis: Vec<RaExpr> = bucket
                .iter()
                .filter(|psi| occurs_within(psi, phi))
                .map(|&p| p.clone())
                .collect();
            (!psis.is_empty()).then(|| (phi.clone(), psis))
        })
        .collect()
}

/// Progress for one size stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub size: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub elapsed: Duration,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "size={} candidates={} accepted={} elapsed={:.2}s",
            self.size,
            self.candidates,
            self.accepted,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Clone, Debug)]
pub struct MineOutcome {
    pub rules: Vec<RewriteRule>,
    pub stages: Vec<StageReport>,
}

fn checkpoint_prefix(max_metavars: usize) -> String {
    format!("# mined metavars={max_metavars} through=")
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> RuleFileError {
    RuleFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The last completed size and its rules, when resuming from `cfg.out`.
fn read_checkpoint(cfg: &MinerConfig) -> Result<Option<(usize, Vec<RewriteRule>)>, MineError> {
    let Some(path) = cfg.out.as_ref().filter(|p| cfg.resume && p.exists()) else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let through = text
        .lines()
        .next()
        .and_then(|header| header.strip_prefix(&checkpoint_prefix(cfg.max_metavars)))
        .and_then(|n| n.trim().parse().ok());
    match through {
        Some(n) => Ok(Some((n, load_rules(path, Mode::Homogeneous)?))),
        None => Ok(None),
    }
}

fn write_checkpoint(
    cfg: &MinerConfig,
    size: usize,
    rules: &[RewriteRule],
) -> Result<(), MineError> {
    let Some(path) = &cfg.out else { return Ok(()) };
    let mut text = format!("{}{size}\n", checkpoint_prefix(cfg.max_metavars));
    for r in rules {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    Ok(())
}

/// The valid right-hand sides of least size for `phi`, in order.
fn best_rhs(
    phi: &RaExpr,
    psis: &[RaExpr],
    budget: &OracleBudget,
) -> Result<Vec<RaExpr>, OracleError> {
    let mut found: Vec<RaExpr> = Vec::new();
    for psi in psis {
        if found.first().is_some_and(|f| psi.size() > f.size()) {
            break;
        }
        if check_equiv_ra(phi, psi, budget)?.is_valid() {
            found.push(psi.clone());
        }
    }
    Ok(found)
}

/// Mines homogeneous rules with left-hand sides of size 2 up to
/// `cfg.max_lhs_size`. Each stage sees only the rules of earlier stages.
pub fn mine(
    cfg: &MinerConfig,
    progress: &mut dyn FnMut(&StageReport),
) -> Result<MineOutcome, MineError> {
    cfg.validate()?;
    let (mut done, mut rules) = read_checkpoint(cfg)?.unwrap_or((1, Vec::new()));
    let mut stages = Vec::new();
    // Candidates are checked one at a time; the parallelism is across them.
    let inner = cfg.budget.with_exec(Exec::Sequential);
    while done < cfg.max_lhs_size {
        let size = done + 1;
        let start = Instant::now();
        let prior = compile_rules(rules.clone())?;
        let groups = candidate_pairs(size, cfg.max_metavars, &prior);
        let candidates = groups.iter().map(|(_, psis)| psis.len()).sum();
        let results = par::map(cfg.budget.exec, &groups, |(phi, psis)| {
            best_rhs(phi, psis, &inner)
        });
        let mut fresh = Vec::new();
        for ((phi, _), found) in groups.iter().zip(results) {
            for psi in found? {
                fresh.push(RewriteRule::new(phi.clone(), psi, Mode::Homogeneous)?);
            }
        }
        let before = rules.len();
        rules.extend(fresh);
        rules = redundancy_filter(rules)?;
        let report = StageReport {
            size,
            candidates,
            accepted: rules.len() - before,
            elapsed: start.elapsed(),
        };
        progress(&report);
        stages.push(report);
        done = size;
        write_checkpoint(cfg, done, &rules)?;
    }
    Ok(MineOutcome { rules, stages })
}

/// Drops every rule whose two sides simplify to the same term under the
/// rules kept before it. Order is preserved.
pub fn redundancy_filter(rules: Vec<RewriteRule>) -> Result<Vec<RewriteRule>, RuleError> {
    let mut kept: Vec<RewriteRule> = Vec::new();
    let mut simplifier = compile_rules(Vec::new())?;
    for rule in rules {
        if kept.iter().any(|k| k.name == rule.name) {
            continue;
        }
        let (l, _) = simplifier.simplify(&rule.lhs);
        let (r, _) = simplifier.simplify(&rule.rhs);
        if l != r {
            kept.push(rule);
            simplifier = compile_rules(kept.clone())?;
        }
    }
    Ok(kept)
}

/// Union-find over type slots.
struct Slots {
    parent: Vec<usize>,
}

impl Slots {
    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn unify(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        self.parent[a.max(b)] = a.min(b);
    }
}

/// A term whose leaves carry type slots instead of sorts.
enum Slotted {
    Leaf(RaExpr, usize, usize),
    Node(RaExpr, Vec<Slotted>),
}

fn slot_term(
    e: &RaExpr,
    slots: &mut Slots,
    metas: &mut BTreeMap<Pred, (usize, usize)>,
) -> (Slotted, (usize, usize)) {
    match e {
        RaExpr::Atom(p, _, _) => {
            let ty = *metas
                .entry(p.clone())
                .or_insert_with(|| (slots.fresh(), slots.fresh()));
            (Slotted::Leaf(e.clone(), ty.0, ty.1), ty)
        }
        // identities stay square: partial identities across sorts are not lifted
        RaExpr::Id(..) => {
            let s = slots.fresh();
            (Slotted::Leaf(e.clone(), s, s), (s, s))
        }
        RaExpr::Top(..) | RaExpr::Bot(..) => {
            let ty = (slots.fresh(), slots.fresh());
            (Slotted::Leaf(e.clone(), ty.0, ty.1), ty)
        }
        _ => {
            let (kids, types): (Vec<_>, Vec<_>) = e
                .children()
                .into_iter()
                .map(|c| slot_term(c, slots, metas))
                .unzip();
            let ty = match e.op() {
                RaOp::Union | RaOp::Intersection => {
                    slots.unify(types[0].0, types[1].0);
                    slots.unify(types[0].1, types[1].1);
                    types[0]
                }
                RaOp::Compose | RaOp::Dagger => {
                    slots.unify(types[0].1, types[1].0);
                    (types[0].0, types[1].1)
                }
                RaOp::Complement => types[0],
                _ => (types[0].1, types[0].0),
            };
            (Slotted::Node(e.clone(), kids), ty)
        }
    }
}

/// Class of every slot in first-occurrence order.
fn slot_order(t: &Slotted, slots: &mut Slots, order: &mut Vec<usize>) {
    match t {
        Slotted::Leaf(_, s, u) => {
            for x in [*s, *u] {
                let root = slots.find(x);
                if !order.contains(&root) {
                    order.push(root);
                }
            }
        }
        Slotted::Node(_, kids) => kids.iter().for_each(|k| slot_order(k, slots, order)),
    }
}

fn instantiate(t: &Slotted, sort_of: &impl Fn(usize) -> Sort) -> RaExpr {
    match t {
        Slotted::Leaf(e, s, u) => {
            let (s, u) = (sort_of(*s), sort_of(*u));
            match e {
                RaExpr::Atom(p, _, _) => RaExpr::Atom(p.clone(), s, u),
                RaExpr::Top(..) => RaExpr::Top(s, u),
                RaExpr::Bot(..) => RaExpr::Bot(s, u),
                _ => RaExpr::Id(s, u),
            }
        }
        Slotted::Node(e, kids) => {
            e.with_children(kids.iter().map(|k| instantiate(k, sort_of)).collect())
        }
    }
}

/// Restricted growth strings of length `n` using at most `blocks` values,
/// coarsest-last: more distinct values first, then lexicographic.
fn partitions(n: usize, blocks: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, blocks: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let used = prefix.iter().max().map_or(0, |m| m + 1);
        for v in 0..=used.min(blocks - 1) {
            prefix.push(v);
            go(prefix, n, blocks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if blocks > 0 {
        go(&mut Vec::new(), n, blocks, &mut out);
    }
    let distinct = |p: &Vec<usize>| p.iter().max().map_or(0, |m| m + 1);
    out.sort_by(|a, b| distinct(b).cmp(&distinct(a)).then(a.cmp(b)));
    out
}

/// `fine` can be specialised to `coarse`: equal in `fine` implies equal in `coarse`.
fn refines(fine: &[usize], coarse: &[usize]) -> bool {
    (0..fine.len()).all(|i| (0..i).all(|j| fine[i] != fine[j] || coarse[i] == coarse[j]))
}

/// The typings of `rule` over `sort_vars` that are valid and not an
/// instance of a more general valid typing, most general first.
pub fn lift_rule(
    rule: &RewriteRule,
    sort_vars: &[Sort],
    budget: &OracleBudget,
) -> Result<Vec<RewriteRule>, OracleError> {
    let mut slots = Slots { parent: Vec::new() };
    let mut metas = BTreeMap::new();
    let (lhs, lt) = slot_term(&rule.lhs, &mut slots, &mut metas);
    let (rhs, rt) = slot_term(&rule.rhs, &mut slots, &mut metas);
    slots.unify(lt.0, rt.0);
    slots.unify(lt.1, rt.1);
    let mut order = Vec::new();
    slot_order(&lhs, &mut slots, &mut order);
    slot_order(&rhs, &mut slots, &mut order);

    // class index of every slot
    let class: Vec<usize> = (0..slots.parent.len())
        .map(|i| {
            let root = slots.find(i);
            order
                .iter()
                .position(|&r| r == root)
                .expect("slot has a class")
        })
        .collect();
    let mut accepted: Vec<Vec<usize>> = Vec::new();
    let mut out = Vec::new();
    for assignment in partitions(order.len(), sort_vars.len()) {
        if accepted.iter().any(|general| refines(general, &assignment)) {
            continue;
        }
        let sort_of = |slot: usize| sort_vars[assignment[class[slot]]].clone();
        let (l, r) = (instantiate(&lhs, &sort_of), instantiate(&rhs, &sort_of));
        let Ok(typed) = RewriteRule::new(l, r, Mode::Heterogeneous) else {
            continue;
        };
        if check_equiv_ra(&typed.lhs, &typed.rhs, budget)?.is_valid() {
            accepted.push(assignment);
            out.push(typed);
        }
    }
    Ok(out)
}

/// Typed versions of `rules` over the sort variables `sort_vars`, with
/// redundant typings removed.
pub fn lift_heterogeneous(
    rules: &[RewriteRule],
    sort_vars: &[Sort],
    budget: &OracleBudget,
) -> Result<Vec<RewriteRule>, MineError> {
    let inner = budget.with_exec(Exec::Sequential);
    let lifted = par::map(budget.exec, rules, |r| lift_rule(r, sort_vars, &inner));
    let mut all = Vec::new();
    for typings in lifted {
        all.extend(typings?);
    }
    Ok(redundancy_filter(all)?)
}

/// The default sort variables for lifting.
pub fn default_sort_vars() -> Vec<Sort> {
    ["P", "Q", "R", "S"].into_iter().map(Sort::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_rules;

    fn hom_rules(text: &str) -> Vec<RewriteRule> {
        parse_rules(text, Mode::Homogeneous).unwrap()
    }

    fn names(rules: &[RewriteRule]) -> Vec<String> {
        rules.iter().map(|r| r.to_line()).collect()
    }

    #[test]
    fn leaf_and_unary_counts() {
        let show = |v: Vec<RaExpr>| v.iter().map(|e| e.to_string()).collect::<Vec<_>>();
        assert_eq!(show(enumerate_patterns(1, 1)), ["A", "top", "bot", "id"]);
        assert_eq!(enumerate_patterns(2, 1).len(), 8);
        assert!(enumerate_patterns(0, 3).is_empty());
        // renaming classes only: `B` alone is not canonical
        assert_eq!(enumerate_patterns(1, 3).len(), 4);
        assert!(enumerate_patterns(3, 2)
            .iter()
            .any(|e| e.to_string() == "A | B"));
        assert!(!enumerate_patterns(3, 2)
            .iter()
            .any(|e| e.to_string() == "B | A"));
    }

    #[test]
    fn candidates_and_pruning() {
        let none = Simplifier::empty();
        let pairs = candidate_pairs(3, 2, &none);
        let find = |phi: &str| {
            pairs
                .iter()
                .find(|(p, _)| p.to_string() == phi)
                .map(|(_, psis)| psis.clone())
        };
        let psis = find("A | A").unwrap();
        assert_eq!(psis[0].to_string(), "A");
        assert!(find("A | B").is_none());
        let prior = compile_rules(hom_rules("A | A => A")).unwrap();
        assert!(candidate_pairs(3, 2, &prior)
            .iter()
            .all(|(p, _)| p.to_string() != "A | A"));
    }

    #[test]
    fn partitions_most_general_first() {
        assert_eq!(partitions(2, 2), vec![vec![0, 1], vec![0, 0]]);
        assert_eq!(partitions(3, 2).len(), 4);
        assert!(refines(&[0, 1, 2], &[0, 0, 1]));
        assert!(!refines(&[0, 0, 1], &[0, 1, 1]));
    }

    #[test]
    fn redundant_rules_are_dropped() {
        let rules = hom_rules("A & A => A\nB & B => B");
        assert_eq!(names(&redundancy_filter(rules).unwrap()), ["A & A => A"]);
        let rules = hom_rules("A | A => A\n(A | A) | B => A | B");
        assert_eq!(names(&redundancy_filter(rules).unwrap()), ["A | A => A"]);
    }

    #[test]
    fn lifting_simple_rules() {
        let budget = OracleBudget::exhaustive(2);
        let lift =
            |s: &str| names(&lift_rule(&hom_rules(s)[0], &default_sort_vars(), &budget).unwrap());
        assert_eq!(lift("A | A => A"), ["A[P,Q] | A[P,Q] => A[P,Q]"]);
        assert_eq!(lift("id^ => id"), ["id[P]^ => id[P]"]);
        assert_eq!(lift("~A | A => top"), ["~A[P,Q] | A[P,Q] => top[P,Q]"]);
    }
}
