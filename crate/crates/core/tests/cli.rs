use fo3ra::cli;

fn run_with(args: &[&str], stdin: &str) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("fo3ra")
        .chain(args.iter().copied())
        .map(std::ffi::OsString::from);
    let code = cli::run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn translate_reads_stdin() {
    let (code, out, err) = run_with(
        &["translate", "-"],
        "~(forall x. forall y. ~A(x,x) | ~A(y,y))",
    );
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.trim(), "top ; ((A & id) ; top)");
}

#[test]
fn translate_trace_prints_every_stage() {
    let (code, out, _) = run_with(&["translate", "--trace"], "exists x. exists y. A(x,y)");
    assert_eq!(code, 0);
    assert!(out.lines().count() >= 6, "{out}");
}

#[test]
fn malformed_input_is_a_usage_error() {
    let (code, _, err) = run_with(&["translate"], "forall x. A(x,");
    assert_eq!(code, 2);
    assert!(err.contains("1:"), "{err}");
    assert_eq!(run_with(&["frobnicate"], "").0, 2);
    assert_eq!(
        run_with(&["check", "--lang", "ra", "-e", "a |", "a"], "").0,
        2
    );
}

#[test]
fn open_formulas_are_rejected() {
    let (code, _, err) = run_with(&["translate"], "A(x,y)");
    assert_eq!(code, 2, "{err}");
}

#[test]
fn inequivalent_terms_print_a_model() {
    let (code, out, _) = run_with(&["check", "--lang", "ra", "-e", "a", "b"], "");
    assert_eq!(code, 1);
    assert!(!out.trim().is_empty());
    let (code, out, _) = run_with(&["check", "--lang", "ra", "-e", "a^^", "a"], "");
    assert_eq!(code, 0, "{out}");
}

#[test]
fn backtranslation_is_closed() {
    let (code, out, _) = run_with(&["backtranslate"], "a ; b");
    assert_eq!(code, 0);
    let phi = fo3ra::parse_fo3(out.trim(), fo3ra::Mode::Homogeneous).unwrap();
    assert!(phi.is_closed());
}

#[test]
fn lift_writes_typed_rules() {
    let dir = tempfile::tempdir().unwrap();
    let hom = dir.path().join("hom.rules");
    let het = dir.path().join("het.rules");
    std::fs::write(&hom, "A | A => A\nid^ => id\n").unwrap();
    let (code, _, err) = run_with(
        &[
            "lift",
            hom.to_str().unwrap(),
            "--out",
            het.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&het).unwrap();
    assert!(text.contains("A[P,Q] | A[P,Q] => A[P,Q]"), "{text}");
    assert!(text.contains("id[P]^ => id[P]"), "{text}");
}
