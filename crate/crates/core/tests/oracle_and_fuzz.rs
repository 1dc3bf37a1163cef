use fo3ra::backtranslate::close;
use fo3ra::cli;
use fo3ra::model::{check_equiv_fo3, OracleBudget, Verdict};
use fo3ra::parser::{parse_fo3, parse_signature};
use fo3ra::simplify::Simplifier;
use fo3ra::syntax::{Formula, Mode, RaExpr};
use fo3ra::testkit::{fuzz, replay, round_trip, Artifact, FuzzConfig};
use fo3ra::translate::translate;

/// Removes the first complement found in preorder.
fn drop_complement(e: &RaExpr) -> Option<RaExpr> {
    if let RaExpr::Complement(body) = e {
        return Some((**body).clone());
    }
    let children: Vec<RaExpr> = e.children().into_iter().cloned().collect();
    for (i, c) in children.iter().enumerate() {
        if let Some(changed) = drop_complement(c) {
            let mut next = children.clone();
            next[i] = changed;
            return Some(e.with_children(next));
        }
    }
    None
}

#[test]
fn a_corrupted_translation_yields_a_counterexample() {
    let het = Mode::Heterogeneous;
    let sig = parse_signature(
        "sort P\nsort Q\nsort R\npred A : P -> R\npred B : R -> P\npred C : P -> Q\n",
        het,
    )
    .unwrap();
    let cases = [
        (
            "forall x:P. forall y:Q. exists z:R. ~(A(x,z) & B(z,x)) & C(x,y)",
            het,
            &sig,
        ),
        (
            "forall x. exists y. ~A(x,y) & A(y,y)",
            Mode::Homogeneous,
            &fo3ra::Signature::homogeneous(),
        ),
        (
            "forall x. exists y. A(x,y) & ~(exists z. A(y,z))",
            Mode::Homogeneous,
            &fo3ra::Signature::homogeneous(),
        ),
    ];
    for (text, mode, sig) in cases {
        let phi = parse_fo3(text, mode).unwrap();
        let t = translate(&phi, sig, mode, Some(&Simplifier::shipped(mode))).unwrap();
        let good = check_equiv_fo3(&phi, &close(t.result()), &OracleBudget::exhaustive(2)).unwrap();
        assert!(good.is_valid(), "{text}: {good}");
        let broken = drop_complement(t.result()).expect("the translation has a complement");
        let verdict = check_equiv_fo3(&phi, &close(&broken), &OracleBudget::default()).unwrap();
        let Verdict::Counterexample(m) = &verdict else {
            panic!("{text}: {verdict}")
        };
        let env = Default::default();
        assert_ne!(
            fo3ra::model::eval_fo3(m, &phi, &env),
            fo3ra::model::eval_fo3(m, &close(&broken), &env),
            "the reported model does not separate the formulas"
        );
    }
}

#[test]
fn fuzzing_is_deterministic() {
    let mut cfg = FuzzConfig::new(Mode::Heterogeneous, 77, 40, 10);
    let first = fuzz(&cfg).unwrap();
    let again = fuzz(&cfg).unwrap();
    cfg.budget = cfg.budget.with_exec(fo3ra::par::Exec::Sequential);
    let sequential = fuzz(&cfg).unwrap();
    assert_eq!(first, again);
    assert_eq!(first, sequential);
    assert_eq!(first.passed, 40);
}

#[test]
fn artifacts_reparse_and_replay() {
    let mode = Mode::Heterogeneous;
    let cfg = FuzzConfig::new(mode, 3, 1, 8);
    let phi = fo3ra::testkit::random_fo3(&cfg, 0);
    let r = round_trip(&phi, &cfg.signature, mode, None, &cfg.budget);
    assert!(r.passed());
    let artifact = Artifact {
        mode,
        index: 12,
        formula: phi.clone(),
        stage: "oracle".into(),
        message: "recorded by hand".into(),
        signature: cfg.signature.clone(),
        trace: format!("{}\n", r.trace.as_ref().unwrap().result()),
        model: None,
    };
    let text = artifact.to_string();
    assert_eq!(Artifact::parse(&text).unwrap(), artifact);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(artifact.file_name());
    std::fs::write(&path, &text).unwrap();
    let replayed = replay(&path, true, &OracleBudget::default()).unwrap();
    assert_eq!(replayed.formula, phi);
    assert!(replayed.passed());

    let (mut out, mut err) = (Vec::new(), Vec::new());
    let args = ["fo3ra", "fuzz", "--replay", path.to_str().unwrap()].map(std::ffi::OsString::from);
    assert_eq!(cli::run(args, &mut std::io::empty(), &mut out, &mut err), 0);
}

#[test]
fn distributing_an_existential_over_a_disjunction_is_valid() {
    let hom = Mode::Homogeneous;
    let l: Formula = parse_fo3("forall x. exists y. A(x,y) | B(y,x)", hom).unwrap();
    let r: Formula = parse_fo3("forall x. (exists y. B(y,x)) | (exists z. A(x,z))", hom).unwrap();
    assert!(check_equiv_fo3(&l, &r, &OracleBudget::exhaustive(3))
        .unwrap()
        .is_valid());
}
