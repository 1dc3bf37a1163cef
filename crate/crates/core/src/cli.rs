//! The `fo3ra` command line.
//!
//! Exit status 0 means success, 1 a semantic failure (a counterexample, a
//! typing violation, an untranslatable formula), 2 a usage or parse error.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backtranslate::close;
use crate::model::{check_equiv_fo3, check_equiv_ra, OracleBudget, OracleError, Stage2, Verdict};
use crate::parser::{parse_fo3, parse_ra, parse_signature, SourceError};
use crate::rulegen::{default_sort_vars, lift_heterogeneous, mine, MinerConfig};
use crate::simplify::{compile_rules, load_rules, save_rules, Simplifier};
use crate::syntax::{
    check_closed_and_typed_fo3, check_well_typed_ra, Mode, Signature, Sort, Violation,
};
use crate::testkit::{fuzz, replay, FuzzConfig};
use crate::translate::{translate, TranslateError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Usage = 2,
}

#[derive(Parser, Debug)]
#[command(
    name = "fo3ra",
    version,
    about = "Three-variable logic to relation algebra and back"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Hom,
    Het,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Hom => Mode::Homogeneous,
            ModeArg::Het => Mode::Heterogeneous,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Lang {
    Fo3,
    Ra,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_enum, default_value = "hom")]
    mode: ModeArg,
    /// Signature file (needed for untyped atoms in het mode).
    #[arg(long)]
    sig: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Translate a closed formula into a relation term.
    Translate {
        #[command(flatten)]
        common: Common,
        /// Formula file, or `-` for stdin.
        #[arg(default_value = "-")]
        input: String,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Print all six stages.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        no_simplify: bool,
    },
    /// Print the closed formula stating that a relation term is full.
    Backtranslate {
        #[command(flatten)]
        common: Common,
        #[arg(default_value = "-")]
        input: String,
    },
    /// Simplify a relation term with a rule file.
    Simplify {
        #[command(flatten)]
        common: Common,
        #[arg(default_value = "-")]
        input: String,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Print each rewrite step.
        #[arg(long)]
        trace: bool,
    },
    /// Check two formulas or two terms for equivalence on finite models.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "fo3")]
        lang: Lang,
        /// Treat the two inputs as text rather than file names.
        #[arg(long, short = 'e')]
        inline: bool,
        first: String,
        second: String,
        /// Largest carrier searched exhaustively.
        #[arg(long, default_value_t = 2)]
        bound: u32,
        /// Models sampled after the exhaustive stage when it is too large to
        /// enumerate; 0 stops after the exhaustive stage.
        #[arg(long, default_value_t = 20_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mine homogeneous rewrite rules.
    Mine {
        #[arg(long, default_value_t = 5)]
        max_size: usize,
        #[arg(long, default_value_t = 3)]
        max_metavars: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Lift homogeneous rules to typed rules.
    Lift {
        /// Homogeneous rule file.
        rules: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated sort variables.
        #[arg(long, value_delimiter = ',', default_values_t = default_sort_vars().iter().map(|s| s.to_string()).collect::<Vec<_>>())]
        sorts: Vec<String>,
    },
    /// Round-trip random formulas through translation and back.
    Fuzz {
        #[arg(long, value_enum, default_value = "hom")]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_simplify: bool,
        /// Directory for failure artifacts.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Re-run a stored failure artifact instead of generating cases.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Check a formula or term against the typing conditions.
    Typecheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ra")]
        lang: Lang,
        #[arg(default_value = "-")]
        input: String,
    },
}

/// A failed command: the exit status and the message for stderr.
struct Fail(ExitStatus, String);

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Fail(ExitStatus::Usage, msg.into())
    }

    fn semantic(msg: impl Into<String>) -> Self {
        Fail(ExitStatus::Failure, msg.into())
    }
}

type Outcome = Result<ExitStatus, Fail>;

fn read_input(arg: &str, stdin: &mut dyn Read) -> Result<(String, String), Fail> {
    if arg == "-" {
        let mut s = String::new();
        stdin
            .read_to_string(&mut s)
            .map_err(|e| Fail::usage(format!("<stdin>: {e}")))?;
        return Ok(("<stdin>".into(), s));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Fail::usage(format!("{arg}: {e}")))?;
    Ok((arg.to_string(), text))
}

fn syntax(name: &str, text: &str, e: SourceError) -> Fail {
    Fail::usage(format!("{name}:{e}\n{}", e.render(text)))
}

fn violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn signature(common: &Common) -> Result<Signature, Fail> {
    let mode = common.mode.into();
    match &common.sig {
        None => Ok(Signature::for_mode(mode)),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
            parse_signature(&text, mode).map_err(|e| syntax(&path.display().to_string(), &text, e))
        }
    }
}

fn simplifier(rules: &Option<PathBuf>, mode: Mode) -> Result<Simplifier, Fail> {
    match rules {
        None => Ok(Simplifier::shipped(mode)),
        Some(path) => {
            let rules = load_rules(path, mode).map_err(|e| Fail::usage(e.to_string()))?;
            compile_rules(rules).map_err(|e| Fail::usage(format!("{}: {e}", path.display())))
        }
    }
}

/// Oracle errors are all about the inputs (mismatched types, bad bounds).
fn oracle_failure(e: OracleError) -> Fail {
    Fail::usage(e.to_string())
}

/// Runs the command line `args` (program name first).
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code as i32;
        }
    };
    match dispatch(cli.command, stdin, out, err) {
        Ok(status) => status as i32,
        Err(Fail(status, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            status as i32
        }
    }
}

fn dispatch(
    cmd: Command,
    stdin: &mut dyn Read,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let io = |e: std::io::Error| Fail::usage(e.to_string());
    match cmd {
        Command::Translate {
            common,
            input,
            rules,
            trace,
            no_simplify,
        } => {
            let mode = common.mode.into();
            let sig = signature(&common)?;
            let (name, text) = read_input(&input, stdin)?;
            let phi = parse_fo3(&text, mode).map_err(|e| syntax(&name, &text, e))?;
            let simp = if no_simplify {
                None
            } else {
                Some(simplifier(&rules, mode)?)
            };
            let t = translate(&phi, &sig, mode, simp.as_ref()).map_err(|e| match e {
                TranslateError::Invalid(_) => Fail::usage(e.to_string()),
                _ => Fail::semantic(e.to_string()),
            })?;
            if trace {
                write!(out, "{t}").map_err(io)?;
            } else {
                writeln!(out, "{}", t.result()).map_err(io)?;
            }
            Ok(ExitStatus::Success)
        }
        Command::Backtranslate { common, input } => {
            let mode = common.mode.into();
            let sig = signature(&common)?;
            let (name, text) = read_input(&input, stdin)?;
            let e = parse_ra(&text, &sig, mode).map_err(|e| syntax(&name, &text, e))?;
            let vs = check_well_typed_ra(&e, &sig);
            if !vs.is_empty() {
                return Err(Fail::semantic(violations(&vs)));
            }
            writeln!(out, "{}", close(&e)).map_err(io)?;
            Ok(ExitStatus::Success)
        }
        Command::Simplify {
            common,
            input,
            rules,
            trace,
        } => {
            let mode = common.mode.into();
            let sig = signature(&common)?;
            let (name, text) = read_input(&input, stdin)?;
            let e = parse_ra(&text, &sig, mode).map_err(|e| syntax(&name, &text, e))?;
            let vs = check_well_typed_ra(&e, &sig);
            if !vs.is_empty() {
                return Err(Fail::semantic(violations(&vs)));
            }
            let (result, steps) = simplifier(&rules, mode)?.simplify(&e);
            if trace {
                for s in &steps {
                    writeln!(out, "{s}").map_err(io)?;
                }
            }
            writeln!(out, "{result}").map_err(io)?;
            Ok(ExitStatus::Success)
        }
        Command::Check {
            common,
            lang,
            inline,
            first,
            second,
            bound,
            samples,
            seed,
        } => {
            let mode = common.mode.into();
            let sig = signature(&common)?;
            let mut load = |arg: &str| {
                if inline {
                    Ok(("<arg>".to_string(), arg.to_string()))
                } else {
                    read_input(arg, stdin)
                }
            };
            let (n1, t1) = load(&first)?;
            let (n2, t2) = load(&second)?;
            let budget = OracleBudget {
                bound,
                stage2: if samples == 0 {
                    Stage2::Off
                } else {
                    Stage2::Auto
                },
                samples,
                seed,
                ..OracleBudget::default()
            };
            let verdict = match lang {
                Lang::Fo3 => {
                    let a = parse_fo3(&t1, mode).map_err(|e| syntax(&n1, &t1, e))?;
                    let b = parse_fo3(&t2, mode).map_err(|e| syntax(&n2, &t2, e))?;
                    if common.sig.is_some() {
                        let vs: Vec<_> = check_closed_and_typed_fo3(&a, &sig)
                            .into_iter()
                            .chain(check_closed_and_typed_fo3(&b, &sig))
                            .collect();
                        if !vs.is_empty() {
                            return Err(Fail::usage(violations(&vs)));
                        }
                    }
                    check_equiv_fo3(&a, &b, &budget)
                }
                Lang::Ra => {
                    let a = parse_ra(&t1, &sig, mode).map_err(|e| syntax(&n1, &t1, e))?;
                    let b = parse_ra(&t2, &sig, mode).map_err(|e| syntax(&n2, &t2, e))?;
                    check_equiv_ra(&a, &b, &budget)
                }
            }
            .map_err(oracle_failure)?;
            writeln!(out, "{verdict}").map_err(io)?;
            Ok(match verdict {
                Verdict::Valid { .. } => ExitStatus::Success,
                Verdict::Counterexample(_) => ExitStatus::Failure,
            })
        }
        Command::Mine {
            max_size,
            max_metavars,
            out: path,
            resume,
        } => {
            let cfg = MinerConfig {
                max_lhs_size: max_size,
                max_metavars,
                out: path.clone(),
                resume,
                ..MinerConfig::default()
            };
            let outcome = mine(&cfg, &mut |stage| {
                let _ = writeln!(err, "{stage}");
            })
            .map_err(|e| Fail::usage(e.to_string()))?;
            if path.is_none() {
                for r in &outcome.rules {
                    writeln!(out, "{}", r.to_line()).map_err(io)?;
                }
            }
            Ok(ExitStatus::Success)
        }
        Command::Lift {
            rules,
            out: path,
            sorts,
        } => {
            let hom =
                load_rules(&rules, Mode::Homogeneous).map_err(|e| Fail::usage(e.to_string()))?;
            let sorts: Vec<Sort> = sorts.iter().map(|s| Sort::new(s.trim())).collect();
            if sorts.is_empty()
                || sorts
                    .iter()
                    .any(|s| !crate::syntax::is_identifier(s.as_str()))
            {
                return Err(Fail::usage("--sorts needs one or more sort names"));
            }
            let lifted = lift_heterogeneous(&hom, &sorts, &OracleBudget::default())
                .map_err(|e| Fail::usage(e.to_string()))?;
            match path {
                Some(p) => save_rules(&lifted, &p).map_err(|e| Fail::usage(e.to_string()))?,
                None => {
                    for r in &lifted {
                        writeln!(out, "{}", r.to_line()).map_err(io)?;
                    }
                }
            }
            Ok(ExitStatus::Success)
        }
        Command::Fuzz {
            mode,
            count,
            size,
            seed,
            no_simplify,
            artifacts,
            replay: stored,
        } => {
            if let Some(path) = stored {
                let r =
                    replay(&path, !no_simplify, &OracleBudget::default()).map_err(Fail::usage)?;
                return match &r.failure {
                    None => {
                        writeln!(out, "passed: {}", r.formula).map_err(io)?;
                        Ok(ExitStatus::Success)
                    }
                    Some((stage, msg)) => {
                        writeln!(out, "failed at {stage}: {msg}").map_err(io)?;
                        if let Some(m) = r.counterexample() {
                            write!(out, "{m}").map_err(io)?;
                        }
                        Ok(ExitStatus::Failure)
                    }
                };
            }
            let mut cfg = FuzzConfig::new(mode.into(), seed, count, size);
            cfg.simplify = !no_simplify;
            cfg.artifacts = artifacts;
            let summary = fuzz(&cfg).map_err(|e| Fail::usage(e.to_string()))?;
            write!(out, "{summary}").map_err(io)?;
            Ok(if summary.failed() == 0 {
                ExitStatus::Success
            } else {
                ExitStatus::Failure
            })
        }
        Command::Typecheck {
            common,
            lang,
            input,
        } => {
            let mode = common.mode.into();
            let sig = signature(&common)?;
            let (name, text) = read_input(&input, stdin)?;
            let vs = match lang {
                Lang::Ra => check_well_typed_ra(
                    &parse_ra(&text, &sig, mode).map_err(|e| syntax(&name, &text, e))?,
                    &sig,
                ),
                Lang::Fo3 => check_closed_and_typed_fo3(
                    &parse_fo3(&text, mode).map_err(|e| syntax(&name, &text, e))?,
                    &sig,
                ),
            };
            if vs.is_empty() {
                writeln!(out, "ok").map_err(io)?;
                Ok(ExitStatus::Success)
            } else {
                writeln!(out, "{}", violations(&vs)).map_err(io)?;
                Ok(ExitStatus::Failure)
            }
        }
    }
}
