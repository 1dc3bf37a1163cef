use fo3ra::cli;
use fo3ra::parser::parse_ra;
use fo3ra::rulegen::enumerate_patterns;
use fo3ra::simplify::Simplifier;
use fo3ra::syntax::{Mode, Sort};
use fo3ra::testkit::{case_rng, het_fuzz_signature, random_ra};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("fo3ra")
        .chain(args.iter().copied())
        .map(std::ffi::OsString::from);
    let code = cli::run(argv, &mut std::io::empty(), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn tree_and_linear_matchers_agree_on_small_terms() {
    let simp = Simplifier::shipped(Mode::Homogeneous);
    let mut fired = 0;
    for size in 1..=5 {
        for e in enumerate_patterns(size, 2) {
            let tree = simp
                .rewrite_root(&e)
                .map(|(r, rule)| (r, rule.name.clone()));
            let linear = simp
                .rewrite_root_linear(&e)
                .map(|(r, rule)| (r, rule.name.clone()));
            assert_eq!(tree, linear, "{e}");
            fired += usize::from(tree.is_some());
        }
    }
    assert!(fired > 1000, "only {fired} terms matched");
}

#[test]
fn tree_and_linear_matchers_agree_on_typed_terms() {
    let simp = Simplifier::shipped(Mode::Heterogeneous);
    let sig = het_fuzz_signature();
    let sorts: Vec<Sort> = sig.sorts().cloned().collect();
    let mut rng = case_rng(5, 5);
    for i in 0..2000 {
        let e = random_ra(
            &mut rng,
            &sig,
            1 + i % 7,
            &sorts[i % 3],
            &sorts[(i / 3) % 3],
        );
        let mut nodes = Vec::new();
        e.visit(&mut |n| nodes.push(n.clone()));
        for n in nodes {
            let tree = simp
                .rewrite_root(&n)
                .map(|(r, rule)| (r, rule.name.clone()));
            let linear = simp
                .rewrite_root_linear(&n)
                .map(|(r, rule)| (r, rule.name.clone()));
            assert_eq!(tree, linear, "{n}");
        }
    }
}

#[test]
fn simplification_reaches_a_normal_form() {
    let simp = Simplifier::shipped(Mode::Homogeneous);
    for e in enumerate_patterns(5, 3) {
        let (s, _) = simp.simplify(&e);
        assert!(simp.is_normal(&s), "{e} stopped at {s}");
    }
}

#[test]
fn freshly_mined_rules_simplify_absorption() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("mined.rules");
    let rules = rules.to_str().unwrap();
    let (code, _, err) = run(&["mine", "--max-size", "5", "--out", rules]);
    assert_eq!(code, 0, "{err}");
    assert!(
        err.lines().any(|l| l.starts_with("size=5 candidates=")),
        "{err}"
    );

    let term = dir.path().join("term.txt");
    std::fs::write(&term, "(a | b) & b").unwrap();
    let (code, out, err) = run(&["simplify", "--rules", rules, term.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.trim(), "b");
}

#[test]
fn resuming_a_finished_run_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("mined.rules");
    let rules = rules.to_str().unwrap();
    assert_eq!(run(&["mine", "--max-size", "4", "--out", rules]).0, 0);
    let first = std::fs::read_to_string(rules).unwrap();
    assert_eq!(
        run(&["mine", "--max-size", "5", "--out", rules, "--resume"]).0,
        0
    );
    let resumed = std::fs::read_to_string(rules).unwrap();
    assert_eq!(run(&["mine", "--max-size", "5", "--out", rules]).0, 0);
    let fresh = std::fs::read_to_string(rules).unwrap();
    assert!(resumed.len() > first.len());
    assert_eq!(resumed, fresh);
}

#[test]
fn simplify_trace_names_each_rule() {
    let dir = tempfile::tempdir().unwrap();
    let term = dir.path().join("term.txt");
    std::fs::write(&term, "a^^ | a^^").unwrap();
    let (code, out, _) = run(&["simplify", "--trace", term.to_str().unwrap()]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.last(), Some(&"a"), "{out}");
    assert!(lines.iter().any(|l| l.starts_with("A^^ = A: ")), "{out}");
    let sig = het_fuzz_signature();
    assert!(parse_ra(lines.last().unwrap(), &sig, Mode::Heterogeneous).is_ok());
}
