//! Size-reducing term rewriting driven by a rule file.
//!
//! Rules are patterns over metavariables (single uppercase letters) whose
//! sorts are sort variables. A rule applies at the shallowest, then
//! leftmost, position where any rule matches; among the rules matching
//! there, the earliest in the file wins.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::parser::{parse_rules, SourceError};
use crate::syntax::{check_well_typed_ra, Mode, Pred, RaExpr, RaOp, Signature, Sort};

pub fn is_metavariable(p: &Pred) -> bool {
    let s = p.as_str();
    s.len() == 1 && s.as_bytes()[0].is_ascii_uppercase()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("right-hand side (size {rhs}) is not smaller than left-hand side (size {lhs})")]
    NotSmaller { lhs: usize, rhs: usize },
    #[error("`{0}` occurs more often on the right than on the left")]
    MoreOccurrences(Pred),
    #[error("`{0}` is not a metavariable")]
    NotAMetavariable(Pred),
    #[error("sort `{0}` on the right does not occur on the left")]
    UnboundSort(Sort),
    #[error("ill-typed pattern: {0}")]
    IllTyped(String),
    #[error("the two sides have different types")]
    TypeMismatch,
    #[error("duplicate rule `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Error)]
pub enum RuleFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse { path: String, source: SourceError },
}

/// `lhs => rhs`, named by its rendering `lhs = rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub name: String,
    pub lhs: RaExpr,
    pub rhs: RaExpr,
    pub mode: Mode,
}

impl RewriteRule {
    pub fn new(lhs: RaExpr, rhs: RaExpr, mode: Mode) -> Result<Self, RuleError> {
        let (ls, rs) = (lhs.size(), rhs.size());
        if rs >= ls {
            return Err(RuleError::NotSmaller { lhs: ls, rhs: rs });
        }
        let lcount = lhs.predicate_counts();
        for (p, n) in rhs.predicate_counts() {
            if !is_metavariable(&p) {
                return Err(RuleError::NotAMetavariable(p));
            }
            if lcount.get(&p).copied().unwrap_or(0) < n {
                return Err(RuleError::MoreOccurrences(p));
            }
        }
        if let Some(p) = lcount.keys().find(|p| !is_metavariable(p)) {
            return Err(RuleError::NotAMetavariable(p.clone()));
        }
        let lsorts = lhs.sorts();
        if let Some(s) = rhs.sorts().into_iter().find(|s| !lsorts.contains(s)) {
            return Err(RuleError::UnboundSort(s));
        }
        let sig = Signature::infer_from_ra([&lhs, &rhs]);
        let violations: Vec<_> = check_well_typed_ra(&lhs, &sig)
            .into_iter()
            .chain(check_well_typed_ra(&rhs, &sig))
            .collect();
        if let Some(v) = violations.first() {
            return Err(RuleError::IllTyped(v.to_string()));
        }
        if lhs.type_of() != rhs.type_of() {
            return Err(RuleError::TypeMismatch);
        }
        Ok(RewriteRule {
            name: format!("{lhs} = {rhs}"),
            lhs,
            rhs,
            mode,
        })
    }

    /// The rule as a line of a rule file.
    pub fn to_line(&self) -> String {
        format!("{} => {}", self.lhs, self.rhs)
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Bindings produced by a successful match.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution {
    pub terms: BTreeMap<Pred, RaExpr>,
    pub sorts: BTreeMap<Sort, Sort>,
}

impl Substitution {
    fn bind_sort(&mut self, var: &Sort, sort: Sort) -> bool {
        match self.sorts.get(var) {
            Some(bound) => *bound == sort,
            None => {
                self.sorts.insert(var.clone(), sort);
                true
            }
        }
    }

    /// Replaces metavariables and sort variables in `pattern`.
    pub fn apply(&self, pattern: &RaExpr) -> RaExpr {
        let sort = |s: &Sort| self.sorts.get(s).cloned().unwrap_or_else(|| s.clone());
        match pattern {
            RaExpr::Atom(p, s, t) => match self.terms.get(p) {
                Some(e) => e.clone(),
                None => RaExpr::Atom(p.clone(), sort(s), sort(t)),
            },
            RaExpr::Top(s, t) => RaExpr::Top(sort(s), sort(t)),
            RaExpr::Bot(s, t) => RaExpr::Bot(sort(s), sort(t)),
            RaExpr::Id(s, t) => RaExpr::Id(sort(s), sort(t)),
            _ => pattern.with_children(
                pattern
                    .children()
                    .into_iter()
                    .map(|c| self.apply(c))
                    .collect(),
            ),
        }
    }
}

/// Matches `pattern` against the whole of `e`. Repeated metavariables must
/// bind structurally equal subterms.
pub fn match_pattern(pattern: &RaExpr, e: &RaExpr) -> Option<Substitution> {
    let mut subst = Substitution::default();
    match_into(pattern, e, &mut subst).then_some(subst)
}

fn match_into(pattern: &RaExpr, e: &RaExpr, subst: &mut Substitution) -> bool {
    match (pattern, e) {
        (RaExpr::Atom(m, s, t), _) => {
            let bound = match subst.terms.get(m) {
                Some(prev) => prev == e,
                None => {
                    subst.terms.insert(m.clone(), e.clone());
                    true
                }
            };
            bound && subst.bind_sort(s, e.source()) && subst.bind_sort(t, e.target())
        }
        (RaExpr::Top(s, t), RaExpr::Top(u, v))
        | (RaExpr::Bot(s, t), RaExpr::Bot(u, v))
        | (RaExpr::Id(s, t), RaExpr::Id(u, v)) => {
            subst.bind_sort(s, u.clone()) && subst.bind_sort(t, v.clone())
        }
        _ if pattern.op() == e.op()
            && !matches!(e.op(), RaOp::Top | RaOp::Bot | RaOp::Id | RaOp::Atom) =>
        {
            pattern
                .children()
                .into_iter()
                .zip(e.children())
                .all(|(p, c)| match_into(p, c, subst))
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Wild,
    Op(RaOp),
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: HashMap<Key, usize>,
    rules: Vec<usize>,
}

/// Trie over the pre-order operator sequence of rule left-hand sides;
/// a metavariable stands for a whole subterm.
#[derive(Clone, Debug)]
struct DiscriminationTree {
    nodes: Vec<Node>,
}

impl DiscriminationTree {
    fn new(patterns: &[&RaExpr]) -> Self {
        let mut tree = DiscriminationTree {
            nodes: vec![Node::default()],
        };
        for (i, p) in patterns.iter().enumerate() {
            let mut keys = Vec::new();
            p.visit(&mut |node| {
                keys.push(match node {
                    RaExpr::Atom(..) => Key::Wild,
                    other => Key::Op(other.op()),
                })
            });
            let mut at = 0;
            for k in keys {
                at = match tree.nodes[at].children.get(&k) {
                    Some(&next) => next,
                    None => {
                        tree.nodes.push(Node::default());
                        let next = tree.nodes.len() - 1;
                        tree.nodes[at].children.insert(k, next);
                        next
                    }
                };
            }
            tree.nodes[at].rules.push(i);
        }
        tree
    }

    /// Rules whose left-hand side shape fits `e`, in rule order.
    fn candidates(&self, e: &RaExpr) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(0, &mut vec![e], &mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, at: usize, pending: &mut Vec<&RaExpr>, out: &mut Vec<usize>) {
        let node = &self.nodes[at];
        let Some(next) = pending.pop() else {
            out.extend(&node.rules);
            return;
        };
        if let Some(&child) = node.children.get(&Key::Wild) {
            self.collect(child, pending, out);
        }
        if next.op() != RaOp::Atom {
            if let Some(&child) = node.children.get(&Key::Op(next.op())) {
                let kids = next.children();
                let depth = pending.len();
                pending.extend(kids.iter().rev());
                self.collect(child, pending, out);
                pending.truncate(depth);
            }
        }
        pending.push(next);
    }
}

/// One rewrite: the rule applied and the whole term before and after.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub rule: String,
    pub before: RaExpr,
    pub after: RaExpr,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} => {}", self.rule, self.before, self.after)
    }
}

/// A compiled rule set.
#[derive(Clone, Debug)]
pub struct Simplifier {
    rules: Vec<RewriteRule>,
    tree: DiscriminationTree,
}

/// Indexes `rules` for matching. Rule names must be unique.
pub fn compile_rules(rules: Vec<RewriteRule>) -> Result<Simplifier, RuleError> {
    let mut seen = BTreeSet::new();
    for r in &rules {
        if !seen.insert(r.name.as_str()) {
            return Err(RuleError::Duplicate(r.name.clone()));
        }
    }
    let tree = DiscriminationTree::new(&rules.iter().map(|r| &r.lhs).collect::<Vec<_>>());
    Ok(Simplifier { rules, tree })
}

const HOM_RULES: &str = include_str!("../rules/hom.rules");
const HET_RULES: &str = include_str!("../rules/het.rules");

impl Simplifier {
    pub fn empty() -> Self {
        compile_rules(Vec::new()).expect("no rules, no duplicates")
    }

    /// The rule set shipped with the crate for `mode`.
    pub fn shipped(mode: Mode) -> Self {
        let text = match mode {
            Mode::Homogeneous => HOM_RULES,
            Mode::Heterogeneous => HET_RULES,
        };
        let rules = parse_rules(text, mode).expect("shipped rule file parses");
        compile_rules(rules).expect("shipped rule file has unique names")
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    /// The first rule, in order, whose left-hand side matches `e` at the root.
    pub fn rewrite_root(&self, e: &RaExpr) -> Option<(RaExpr, &RewriteRule)> {
        self.tree.candidates(e).into_iter().find_map(|i| {
            let rule = &self.rules[i];
            match_pattern(&rule.lhs, e).map(|s| (s.apply(&rule.rhs), rule))
        })
    }

    /// Same as [`rewrite_root`](Self::rewrite_root) without the index.
    pub fn rewrite_root_linear(&self, e: &RaExpr) -> Option<(RaExpr, &RewriteRule)> {
        self.rules
            .iter()
            .find_map(|rule| match_pattern(&rule.lhs, e).map(|s| (s.apply(&rule.rhs), rule)))
    }

    /// Rewrites once at the shallowest, leftmost position where a rule applies.
    pub fn rewrite_once(&self, e: &RaExpr) -> Option<(RaExpr, &RewriteRule)> {
        let mut queue: VecDeque<(Vec<usize>, &RaExpr)> = VecDeque::from([(Vec::new(), e)]);
        while let Some((path, node)) = queue.pop_front() {
            if let Some((replacement, rule)) = self.rewrite_root(node) {
                return Some((replace_at(e, &path, replacement), rule));
            }
            for (i, child) in node.children().into_iter().enumerate() {
                let mut p = path.clone();
                p.push(i);
                queue.push_back((p, child));
            }
        }
        None
    }

    /// True when no rule applies anywhere in `e`.
    pub fn is_normal(&self, e: &RaExpr) -> bool {
        let mut normal = true;
        e.visit(&mut |node| {
            if normal && self.rewrite_root(node).is_some() {
                normal = false;
            }
        });
        normal
    }

    /// Rewrites to a fixpoint. Every step shrinks the term, so this stops
    /// after fewer than `e.size()` steps.
    pub fn simplify(&self, e: &RaExpr) -> (RaExpr, Vec<TraceStep>) {
        let mut current = e.clone();
        let mut trace = Vec::new();
        while let Some((next, rule)) = self.rewrite_once(&current) {
            trace.push(TraceStep {
                rule: rule.name.clone(),
                before: current,
                after: next.clone(),
            });
            current = next;
        }
        (current, trace)
    }
}

/// [`Simplifier::simplify`] as a free function.
pub fn simplify_full(e: &RaExpr, simplifier: &Simplifier) -> (RaExpr, Vec<TraceStep>) {
    simplifier.simplify(e)
}

fn replace_at(e: &RaExpr, path: &[usize], replacement: RaExpr) -> RaExpr {
    match path.split_first() {
        None => replacement,
        Some((&i, rest)) => {
            let mut kids: Vec<RaExpr> = e.children().into_iter().cloned().collect();
            kids[i] = replace_at(&kids[i], rest, replacement);
            e.with_children(kids)
        }
    }
}

pub fn save_rules(rules: &[RewriteRule], path: &Path) -> Result<(), RuleFileError> {
    let mut text = String::new();
    for r in rules {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| RuleFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_rules(path: &Path, mode: Mode) -> Result<Vec<RewriteRule>, RuleFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| RuleFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_rules(&text, mode).map_err(|source| RuleFileError::Parse {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_pattern, parse_ra};

    fn hom(s: &str) -> RaExpr {
        parse_ra(s, &Signature::homogeneous(), Mode::Homogeneous).unwrap()
    }

    fn rules(text: &str) -> Simplifier {
        compile_rules(parse_rules(text, Mode::Homogeneous).unwrap()).unwrap()
    }

    #[test]
    fn nonlinear_matching() {
        let p = parse_pattern("(A | B) & B", Mode::Homogeneous).unwrap();
        let s = match_pattern(&p, &hom("(a | (b;c)) & (b;c)")).unwrap();
        assert_eq!(s.terms[&Pred::new("A")], hom("a"));
        assert_eq!(s.terms[&Pred::new("B")], hom("b;c"));
        assert!(match_pattern(&p, &hom("(a | b) & c")).is_none());
        let p = parse_pattern("A | A", Mode::Homogeneous).unwrap();
        assert_eq!(
            match_pattern(&p, &hom("a | a")).unwrap().terms[&Pred::new("A")],
            hom("a")
        );
    }

    #[test]
    fn sort_variables_bind_consistently() {
        let p = parse_pattern("A[P,Q] ; top[Q,R]", Mode::Heterogeneous).unwrap();
        let e = parse_ra("a[X,Y] ; top[Y,Z]", &Signature::new(), Mode::Heterogeneous).unwrap();
        let s = match_pattern(&p, &e).unwrap();
        assert_eq!(s.sorts[&Sort::new("R")], Sort::new("Z"));
        let id = parse_pattern("id[P]", Mode::Heterogeneous).unwrap();
        let cross = parse_ra("id[X,Y]", &Signature::new(), Mode::Heterogeneous).unwrap();
        assert!(match_pattern(&id, &cross).is_none());
    }

    #[test]
    fn shallowest_leftmost_rewrite() {
        let s = rules("A & A => A\nA | A => A");
        let e = hom("(top;((A&id);top)) & (top;((A&id);top))");
        let (out, rule) = s.rewrite_once(&e).unwrap();
        assert_eq!(out, hom("top;((A&id);top)"));
        assert_eq!(rule.name, "A & A = A");
        assert!(s.rewrite_once(&hom("a")).is_none());
        let (out, rule) = s.rewrite_once(&hom("b & b")).unwrap();
        assert_eq!((out, rule.name.as_str()), (hom("b"), "A & A = A"));
        // both children reducible: the left one goes first
        let (out, _) = s.rewrite_once(&hom("(a | a) ; (b & b)")).unwrap();
        assert_eq!(out, hom("a ; (b & b)"));
    }

    #[test]
    fn fixpoint_and_trace() {
        let s = rules("~A | A => top\nA | A => A");
        let (out, trace) = s.simplify(&hom("~a | a"));
        assert_eq!(out, hom("top"));
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].to_string(), "~A | A = top: ~a | a => top");
        let (out, trace) = s.simplify(&hom("bot"));
        assert_eq!(out, hom("bot"));
        assert!(trace.is_empty());
    }

    #[test]
    fn index_dispatches_on_root_operator() {
        let s = rules("A | A => A\n(A | B) & B => B");
        assert_eq!(s.tree.candidates(&hom("a | a")), vec![0]);
        assert_eq!(s.tree.candidates(&hom("(a | b) & b")), vec![1]);
        assert!(s.tree.candidates(&hom("a ; b")).is_empty());
        assert!(Simplifier::empty().rewrite_once(&hom("a | a")).is_none());
    }

    #[test]
    fn rule_invariants() {
        let p = |s: &str| parse_pattern(s, Mode::Homogeneous).unwrap();
        assert!(matches!(
            RewriteRule::new(p("A"), p("A | A"), Mode::Homogeneous),
            Err(RuleError::NotSmaller { .. })
        ));
        assert!(matches!(
            RewriteRule::new(p("A & B"), p("C"), Mode::Homogeneous),
            Err(RuleError::MoreOccurrences(_))
        ));
        let h = |s: &str| parse_pattern(s, Mode::Heterogeneous).unwrap();
        assert!(matches!(
            RewriteRule::new(h("A[P,Q] | A[P,Q]"), h("top[P,R]"), Mode::Heterogeneous),
            Err(RuleError::UnboundSort(_))
        ));
        assert!(matches!(
            RewriteRule::new(h("A[P,Q] ; B[P,Q]"), h("A[P,Q]"), Mode::Heterogeneous),
            Err(RuleError::IllTyped(_))
        ));
        let r = RewriteRule::new(p("A | A"), p("A"), Mode::Homogeneous).unwrap();
        assert!(matches!(
            compile_rules(vec![r.clone(), r]),
            Err(RuleError::Duplicate(_))
        ));
    }

    #[test]
    fn rule_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.txt");
        let rules = parse_rules(
            "A | A => A\nid^ => id\n(A | B) | B => B | A",
            Mode::Homogeneous,
        )
        .unwrap();
        save_rules(&rules, &path).unwrap();
        assert_eq!(load_rules(&path, Mode::Homogeneous).unwrap(), rules);
    }

    #[test]
    fn shipped_rule_sets_load() {
        assert!(!Simplifier::shipped(Mode::Homogeneous).rules().is_empty());
        assert!(!Simplifier::shipped(Mode::Heterogeneous).rules().is_empty());
    }
}
