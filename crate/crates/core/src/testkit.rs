//! Random closed formulas and the translate, back-translate, compare loop.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backtranslate::close;
use crate::model::{check_equiv_fo3, check_equiv_ra, FiniteModel, OracleBudget, Verdict};
use crate::par::{self, Exec};
use crate::parser::{parse_fo3, parse_signature};
use crate::simplify::{RewriteRule, Simplifier};
use crate::syntax::{Formula, Mode, Pred, RaExpr, RaOp, Signature, Sort, Var};
use crate::translate::{translate, TranslationTrace, VARIABLE_POOL};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FuzzConfigError {
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("target size must be at least 2, got {0}")]
    SizeTooSmall(usize),
    #[error("the signature declares no predicates")]
    NoPredicates,
}

#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub count: usize,
    pub target_size: usize,
    pub mode: Mode,
    pub signature: Signature,
    pub simplify: bool,
    pub budget: OracleBudget,
    /// Where failure artifacts go, if anywhere.
    pub artifacts: Option<PathBuf>,
}

/// Three sorts, three predicates with mixed typings.
pub fn het_fuzz_signature() -> Signature {
    parse_signature(
        "sort P\nsort Q\nsort R\npred a : P -> Q\npred b : Q -> Q\npred c : R -> P\n",
        Mode::Heterogeneous,
    )
    .expect("fixed signature parses")
}

/// The homogeneous signature with predicates `a`, `b`, `c`.
pub fn hom_fuzz_signature() -> Signature {
    parse_signature(
        "pred a : U -> U\npred b : U -> U\npred c : U -> U\n",
        Mode::Homogeneous,
    )
    .expect("fixed signature parses")
}

impl FuzzConfig {
    pub fn new(mode: Mode, seed: u64, count: usize, target_size: usize) -> Self {
        let signature = match mode {
            Mode::Homogeneous => hom_fuzz_signature(),
            Mode::Heterogeneous => het_fuzz_signature(),
        };
        FuzzConfig {
            seed,
            count,
            target_size,
            mode,
            signature,
            simplify: true,
            budget: OracleBudget::default(),
            artifacts: None,
        }
    }

    pub fn validate(&self) -> Result<(), FuzzConfigError> {
        if self.count == 0 {
            return Err(FuzzConfigError::ZeroCount);
        }
        if self.target_size < 2 {
            return Err(FuzzConfigError::SizeTooSmall(self.target_size));
        }
        if self.signature.predicates().next().is_none() {
            return Err(FuzzConfigError::NoPredicates);
        }
        Ok(())
    }
}

/// The generator stream for case `index`.
pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Gen {
    rng: ChaCha8Rng,
    sorts: Vec<Sort>,
    preds: Vec<(Pred, Sort, Sort)>,
}

impl Gen {
    /// A formula of exactly `n` nodes whose free variables are bound in `scope`
    /// (innermost binding last).
    fn formula(&mut self, n: usize, scope: &mut Vec<(Var, Sort)>) -> Formula {
        if n == 1 {
            return self.leaf(scope);
        }
        let choice = if scope.is_empty() {
            0
        } else {
            self.rng.gen_range(0..8)
        };
        match choice {
            0..=2 => {
                let v = Var::new(
                    VARIABLE_POOL
                        .choose(&mut self.rng)
                        .expect("pool is not empty"),
                );
                let s = self
                    .sorts
                    .choose(&mut self.rng)
                    .expect("at least one sort")
                    .clone();
                scope.push((v.clone(), s.clone()));
                let body = self.formula(n - 1, scope);
                scope.pop();
                if self.rng.gen_bool(0.5) {
                    Formula::Exists(v, s, Box::new(body))
                } else {
                    Formula::Forall(v, s, Box::new(body))
                }
            }
            3 => Formula::not(self.formula(n - 1, scope)),
            _ if n == 2 => Formula::not(self.formula(1, scope)),
            _ => {
                let left = self.rng.gen_range(1..n - 1);
                let l = self.formula(left, scope);
                let r = self.formula(n - 1 - left, scope);
                if choice % 2 == 0 {
                    Formula::and(l, r)
                } else {
                    Formula::or(l, r)
                }
            }
        }
    }

    fn leaf(&mut self, scope: &[(Var, Sort)]) -> Formula {
        // the visible binding of each pool name
        let visible: Vec<(Var, Sort)> = VARIABLE_POOL
            .iter()
            .filter_map(|name| {
                scope
                    .iter()
                    .rev()
                    .find(|(v, _)| v.as_str() == *name)
                    .cloned()
            })
            .collect();
        let roll = self.rng.gen_range(0..10);
        if !visible.is_empty() && roll < 8 {
            let mut fits: Vec<(Pred, Var, Var)> = Vec::new();
            for (p, s, t) in &self.preds {
                for (x, _) in visible.iter().filter(|(_, vs)| vs == s) {
                    for (y, _) in visible.iter().filter(|(_, vt)| vt == t) {
                        fits.push((p.clone(), x.clone(), y.clone()));
                    }
                }
            }
            if let Some((p, x, y)) = fits.choose(&mut self.rng) {
                return Formula::Atom(p.clone(), x.clone(), y.clone());
            }
        }
        if !visible.is_empty() && roll < 9 {
            let (x, s) = visible.choose(&mut self.rng).expect("not empty").clone();
            let same: Vec<&(Var, Sort)> = visible.iter().filter(|(_, t)| *t == s).collect();
            let (y, _) = same.choose(&mut self.rng).expect("x itself qualifies");
            return Formula::Equals(x, y.clone());
        }
        if self.rng.gen_bool(0.5) {
            Formula::True
        } else {
            Formula::False
        }
    }
}

fn generator(sig: &Signature, rng: ChaCha8Rng) -> Gen {
    let mut sorts: Vec<Sort> = sig.sorts().cloned().collect();
    if sorts.is_empty() {
        sorts.push(Sort::universal());
    }
    let preds = sig
        .predicates()
        .map(|(p, (s, t))| (p.clone(), s.clone(), t.clone()))
        .collect();
    Gen { rng, sorts, preds }
}

/// Case `index` of `cfg`: closed, well-typed, at most three variable names,
/// with size within 20% of the target.
pub fn random_fo3(cfg: &FuzzConfig, index: u64) -> Formula {
    let mut g = generator(&cfg.signature, case_rng(cfg.seed, index));
    let t = cfg.target_size as f64;
    let lo = ((t * 0.8).ceil() as usize).max(2);
    let hi = ((t * 1.2).floor() as usize).max(lo);
    let n = g.rng.gen_range(lo..=hi);
    g.formula(n, &mut Vec::new())
}

/// A well-typed term of type `(s, t)` with exactly `n` nodes, using the
/// predicates of `sig`. Atoms are replaced by constants where no
/// predicate has the needed type.
pub fn random_ra(rng: &mut impl Rng, sig: &Signature, n: usize, s: &Sort, t: &Sort) -> RaExpr {
    let sorts: Vec<Sort> = if sig.is_homogeneous() {
        vec![Sort::universal()]
    } else {
        sig.sorts().cloned().collect()
    };
    if n <= 1 {
        let atoms: Vec<RaExpr> = sig
            .predicates()
            .filter(|(_, ty)| ty.0 == *s && ty.1 == *t)
            .map(|(p, _)| RaExpr::Atom(p.clone(), s.clone(), t.clone()))
            .collect();
        let roll = rng.gen_range(0..10);
        if let (true, Some(a)) = (roll < 6, atoms.choose(rng)) {
            return a.clone();
        }
        return match roll % 3 {
            0 if s == t => RaExpr::Id(s.clone(), t.clone()),
            0 | 1 => RaExpr::Top(s.clone(), t.clone()),
            _ => RaExpr::Bot(s.clone(), t.clone()),
        };
    }
    let op = if n == 2 {
        *RaOp::UNARY.choose(rng).expect("not empty")
    } else {
        *[RaOp::UNARY.as_slice(), RaOp::BINARY.as_slice()]
            .concat()
            .choose(rng)
            .expect("not empty")
    };
    match op {
        RaOp::Complement => RaExpr::complement(random_ra(rng, sig, n - 1, s, t)),
        RaOp::Converse => RaExpr::converse(random_ra(rng, sig, n - 1, t, s)),
        _ => {
            let left = rng.gen_range(1..n - 1);
            let (ls, lt, rs, rt) = match op {
                RaOp::Union | RaOp::Intersection => (s.clone(), t.clone(), s.clone(), t.clone()),
                _ => {
                    let mid = sorts.choose(rng).expect("at least one sort").clone();
                    (s.clone(), mid.clone(), mid, t.clone())
                }
            };
            let l = random_ra(rng, sig, left, &ls, &lt);
            let r = random_ra(rng, sig, n - 1 - left, &rs, &rt);
            RaExpr::binary(op, l, r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Translate,
    Oracle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Translate => "translate",
            Stage::Oracle => "oracle",
        })
    }
}

/// Outcome of one round trip.
#[derive(Clone, Debug)]
pub struct RoundTrip {
    pub formula: Formula,
    pub trace: Option<TranslationTrace>,
    pub back: Option<Formula>,
    pub verdict: Option<Verdict>,
    /// The failing stage and what went wrong, if anything did.
    pub failure: Option<(Stage, String)>,
}

impl RoundTrip {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn counterexample(&self) -> Option<&FiniteModel> {
        self.verdict.as_ref().and_then(Verdict::counterexample)
    }
}

/// Translates `phi`, reads the result back as a closed formula, and asks
/// the oracle whether the two agree.
pub fn round_trip(
    phi: &Formula,
    sig: &Signature,
    mode: Mode,
    simplifier: Option<&Simplifier>,
    budget: &OracleBudget,
) -> RoundTrip {
    let mut report = RoundTrip {
        formula: phi.clone(),
        trace: None,
        back: None,
        verdict: None,
        failure: None,
    };
    let trace = match translate(phi, sig, mode, simplifier) {
        Ok(t) => t,
        Err(e) => {
            report.failure = Some((Stage::Translate, e.to_string()));
            return report;
        }
    };
    let back = close(trace.result());
    report.trace = Some(trace);
    match check_equiv_fo3(phi, &back, budget) {
        Ok(v) => {
            if let Verdict::Counterexample(_) = v {
                report.failure = Some((
                    Stage::Oracle,
                    "the back-translation is not equivalent".into(),
                ));
            }
            report.verdict = Some(v);
        }
        Err(e) => report.failure = Some((Stage::Oracle, e.to_string())),
    }
    report.back = Some(back);
    report
}

/// One failed case, in the form written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub mode: Mode,
    pub index: u64,
    pub formula: Formula,
    pub stage: String,
    pub message: String,
    pub signature: Signature,
    pub trace: String,
    pub model: Option<FiniteModel>,
}

impl Artifact {
    fn from_report(cfg: &FuzzConfig, index: u64, r: &RoundTrip) -> Option<Self> {
        let (stage, message) = r.failure.clone()?;
        Some(Artifact {
            mode: cfg.mode,
            index,
            formula: r.formula.clone(),
            stage: stage.to_string(),
            message,
            signature: cfg.signature.clone(),
            trace: r
                .trace
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_default(),
            model: r.counterexample().cloned(),
        })
    }

    /// The file name used inside an artifact directory.
    pub fn file_name(&self) -> String {
        format!("case-{:06}.txt", self.index)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut header = std::collections::BTreeMap::new();
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("--- ") {
                sections.push((name.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if let Some((k, v)) = line.split_once(": ") {
                header.insert(k.to_string(), v.to_string());
            }
        }
        let field = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| format!("missing `{k}`"))
        };
        let section = |k: &str| {
            sections
                .iter()
                .find(|(n, _)| n == k)
                .map(|(_, b)| b.clone())
        };
        let mode = match field("mode")?.as_str() {
            "hom" => Mode::Homogeneous,
            "het" => Mode::Heterogeneous,
            other => return Err(format!("unknown mode `{other}`")),
        };
        let signature = parse_signature(&section("signature").unwrap_or_default(), mode)
            .map_err(|e| e.to_string())?;
        let model = match section("model") {
            Some(m) => Some(m.parse::<FiniteModel>().map_err(|e| e.to_string())?),
            None => None,
        };
        Ok(Artifact {
            mode,
            index: field("index")?
                .parse()
                .map_err(|_| "bad index".to_string())?,
            formula: parse_fo3(&field("formula")?, mode).map_err(|e| e.to_string())?,
            stage: field("stage")?,
            message: field("message")?,
            signature,
            trace: section("trace").unwrap_or_default(),
            model,
        })
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode: {}", self.mode)?;
        writeln!(f, "index: {}", self.index)?;
        writeln!(f, "formula: {}", self.formula)?;
        writeln!(f, "stage: {}", self.stage)?;
        writeln!(f, "message: {}", self.message.replace('\n', " "))?;
        write!(f, "--- signature\n{}", self.signature)?;
        if !self.trace.is_empty() {
            write!(f, "--- trace\n{}", self.trace)?;
        }
        if let Some(m) = &self.model {
            write!(f, "--- model\n{m}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzSummary {
    pub passed: usize,
    pub failures: Vec<Artifact>,
}

impl FuzzSummary {
    pub fn failed(&self) -> usize {
        self.failures.len()
    }
}

impl fmt::Display for FuzzSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "passed={} failed={}", self.passed, self.failed())?;
        for a in &self.failures {
            writeln!(
                f,
                "case {} failed at {}: {} ({})",
                a.index, a.stage, a.formula, a.message
            )?;
        }
        Ok(())
    }
}

/// Round-trips `cfg.count` generated formulas. Cases run in parallel when
/// the budget allows it; the summary is the same either way.
pub fn fuzz(cfg: &FuzzConfig) -> Result<FuzzSummary, FuzzConfigError> {
    cfg.validate()?;
    let simplifier = cfg.simplify.then(|| Simplifier::shipped(cfg.mode));
    let inner = cfg.budget.with_exec(Exec::Sequential);
    let indices: Vec<u64> = (0..cfg.count as u64).collect();
    let reports = par::map(cfg.budget.exec, &indices, |&i| {
        let phi = random_fo3(cfg, i);
        let r = round_trip(&phi, &cfg.signature, cfg.mode, simplifier.as_ref(), &inner);
        Artifact::from_report(cfg, i, &r)
    });
    let failures: Vec<Artifact> = reports.into_iter().flatten().collect();
    if let Some(dir) = &cfg.artifacts {
        std::fs::create_dir_all(dir).ok();
        for a in &failures {
            // artifact writing is best effort; the summary still reports the failure
            std::fs::write(dir.join(a.file_name()), a.to_string()).ok();
        }
    }
    Ok(FuzzSummary {
        passed: cfg.count - failures.len(),
        failures,
    })
}

/// Re-runs the round trip stored in an artifact file.
pub fn replay(path: &Path, simplify: bool, budget: &OracleBudget) -> Result<RoundTrip, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let a = Artifact::parse(&text)?;
    let simplifier = simplify.then(|| Simplifier::shipped(a.mode));
    Ok(round_trip(
        &a.formula,
        &a.signature,
        a.mode,
        simplifier.as_ref(),
        budget,
    ))
}

/// A rule instance on which the two sides differ.
#[derive(Clone, Debug)]
pub struct RuleFailure {
    pub rule: String,
    pub lhs: RaExpr,
    pub rhs: RaExpr,
    pub model: Option<FiniteModel>,
    pub error: Option<String>,
}

/// The budget used to validate rule instances: every model with carriers
/// up to 2, then carriers of 3 (exhaustively when there are at most 4096
/// such models, otherwise 64 samples).
pub fn rule_instance_budget() -> OracleBudget {
    OracleBudget {
        bound: 2,
        stage2: crate::model::Stage2::Auto,
        exhaustive_limit: 1 << 12,
        samples: 64,
        sample_cards: (3, 3),
        seed: 0,
        exec: Exec::Sequential,
    }
}

/// Replaces each metavariable of `rule` by a random term of its type (up
/// to three nodes, over one predicate per metavariable) and checks the two
/// sides with the oracle, `count` times.
pub fn validate_rule(
    rule: &RewriteRule,
    count: usize,
    seed: u64,
    budget: &OracleBudget,
) -> Result<(), Box<RuleFailure>> {
    let mut types = std::collections::BTreeMap::new();
    rule.lhs.visit(&mut |node| {
        if let RaExpr::Atom(p, s, t) = node {
            types.insert(p.clone(), (s.clone(), t.clone()));
        }
    });
    let mut sig = Signature::new();
    for s in rule.lhs.sorts().into_iter().chain(rule.rhs.sorts()) {
        sig.ensure_sort(s);
    }
    for (p, (s, t)) in &types {
        sig.add_predicate(Pred::new(&p.as_str().to_lowercase()), s.clone(), t.clone())
            .expect("metavariables are distinct letters");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let mut subst = crate::simplify::Substitution::default();
        for (p, (s, t)) in &types {
            let size = rng.gen_range(1..=3);
            subst
                .terms
                .insert(p.clone(), random_ra(&mut rng, &sig, size, s, t));
        }
        let (lhs, rhs) = (subst.apply(&rule.lhs), subst.apply(&rule.rhs));
        let fail = |model, error| {
            Box::new(RuleFailure {
                rule: rule.name.clone(),
                lhs: lhs.clone(),
                rhs: rhs.clone(),
                model,
                error,
            })
        };
        match check_equiv_ra(&lhs, &rhs, budget) {
            Ok(Verdict::Valid { .. }) => {}
            Ok(Verdict::Counterexample(m)) => return Err(fail(Some(m), None)),
            Err(e) => return Err(fail(None, Some(e.to_string()))),
        }
    }
    Ok(())
}
