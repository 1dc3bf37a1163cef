use fo3ra::parser::{parse_fo3, parse_ra};
use fo3ra::syntax::{Mode, Sort};
use fo3ra::testkit::{
    case_rng, het_fuzz_signature, hom_fuzz_signature, random_fo3, random_ra, FuzzConfig,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn formulas_reparse_to_themselves(seed in any::<u64>(), index in 0u64..1000, size in 1usize..20, het in any::<bool>()) {
        let mode = if het { Mode::Heterogeneous } else { Mode::Homogeneous };
        let cfg = FuzzConfig::new(mode, seed, 1, size);
        let phi = random_fo3(&cfg, index);
        let printed = phi.to_string();
        prop_assert_eq!(parse_fo3(&printed, mode).unwrap(), phi, "{}", printed);
    }

    #[test]
    fn terms_reparse_to_themselves(seed in any::<u64>(), size in 1usize..16, het in any::<bool>(), s in 0usize..3, t in 0usize..3) {
        let (mode, sig) = if het {
            (Mode::Heterogeneous, het_fuzz_signature())
        } else {
            (Mode::Homogeneous, hom_fuzz_signature())
        };
        let sorts: Vec<Sort> = sig.sorts().cloned().collect();
        let e = random_ra(&mut case_rng(seed, 0), &sig, size, &sorts[s % sorts.len()], &sorts[t % sorts.len()]);
        let printed = e.to_string();
        prop_assert_eq!(parse_ra(&printed, &sig, mode).unwrap(), e, "{}", printed);
    }
}

#[test]
fn left_nested_binaries_drop_parentheses() {
    let sig = hom_fuzz_signature();
    let e = parse_ra("(a | b) | c", &sig, Mode::Homogeneous).unwrap();
    assert_eq!(e.to_string(), "a | b | c");
    let f = parse_ra("a | (b | c)", &sig, Mode::Homogeneous).unwrap();
    assert_eq!(f.to_string(), "a | (b | c)");
}
