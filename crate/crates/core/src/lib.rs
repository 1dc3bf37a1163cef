//! Three-variable first-order logic and relation algebra: translation in
//! both directions, a rule-driven simplifier, a rule miner, and a
//! finite-model equivalence checker.

pub mod backtranslate;
pub mod cli;
pub mod model;
pub mod par;
pub mod parser;
pub mod rulegen;
pub mod simplify;
pub mod syntax;
pub mod testkit;
pub mod translate;

pub use model::{check_equiv_fo3, check_equiv_ra, OracleBudget, Verdict};
pub use parser::{parse_fo3, parse_ra, parse_rules, parse_signature};
pub use simplify::Simplifier;
pub use syntax::{Formula, Mode, RaExpr, Signature};
pub use translate::{translate, TranslationTrace};
