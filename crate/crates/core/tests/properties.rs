//! Property tests over generated programs.

use proptest::prelude::*;

use wherecheck::analysis::{analyze, AnalysisOptions, Verdict};
use wherecheck::compose::{compose, Mode};
use wherecheck::frontend::{parse_policy, parse_program, pretty_print, Domain, Policy, Program};
use wherecheck::generate::{GenConfig, Generator, POLICY};
use wherecheck::modelgen::build_model;
use wherecheck::oracle::{check_noninterference, check_where_security, OracleConfig, Status};
use wherecheck::properties::{assignment_sites, declassify_at, rewrite_at, rewrite_sites, Rewrite};
use wherecheck::reach::{explicit, is_error_reachable, ReachConfig, Reachability};
use wherecheck::semantics::{low_equiv_store, Store};

fn policy() -> Policy {
    parse_policy(POLICY).unwrap()
}

fn program(seed: u64) -> Program {
    Generator::new(seed, GenConfig::default()).program()
}

fn declass_free(seed: u64) -> Program {
    let cfg = GenConfig {
        declass: false,
        ..GenConfig::default()
    };
    Generator::new(seed, cfg).program()
}

fn oracle(bits: u32) -> OracleConfig {
    OracleConfig {
        bits,
        capacity: 3,
        ..OracleConfig::default()
    }
}

/// `None` when the enumeration exceeds the oracle budget.
fn where_status(p: &Program, pol: &Policy, bits: u32) -> Option<Status> {
    check_where_security(p, pol, &oracle(bits)).ok().map(|v| v.status)
}

/// Oracle verdict with a fixed input bound, so rewrites that duplicate `input` see the same inputs.
/// Rewrites never add variables, so a rewritten program stays within budget whenever the
/// original does.
fn bounded_status(p: &Program, pol: &Policy, bits: u32) -> Option<Status> {
    let cfg = OracleConfig {
        input_prefix: Some(2),
        ..oracle(bits)
    };
    check_where_security(p, pol, &cfg).ok().map(|v| v.status)
}

fn store(vals: &[u64]) -> Store {
    ["h", "h1", "l", "l1"]
        .iter()
        .zip(vals)
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_then_parsing_is_identity(seed in any::<u64>()) {
        let p = program(seed);
        let text = pretty_print(&p);
        prop_assert_eq!(parse_program(&text).unwrap(), p, "{}", text);
    }

    #[test]
    fn low_equivalence_is_an_equivalence(
        a in prop::collection::vec(0u64..4, 4),
        b in prop::collection::vec(0u64..4, 4),
        c in prop::collection::vec(0u64..4, 4),
    ) {
        let pol = policy();
        let (a, b, c) = (store(&a), store(&b), store(&c));
        for level in pol.lattice.domains() {
            prop_assert!(low_equiv_store(&a, &a, level, &pol));
            prop_assert_eq!(low_equiv_store(&a, &b, level, &pol), low_equiv_store(&b, &a, level, &pol));
            if low_equiv_store(&a, &b, level, &pol) && low_equiv_store(&b, &c, level, &pol) {
                prop_assert!(low_equiv_store(&a, &c, level, &pol));
            }
            // equivalence at a level implies equivalence at every level below it
            for lower in pol.lattice.domains().filter(|&d| pol.lattice.leq(d, level)) {
                if low_equiv_store(&a, &b, level, &pol) {
                    prop_assert!(low_equiv_store(&a, &b, lower, &pol));
                }
            }
        }
    }

    #[test]
    fn symbolic_and_explicit_backends_agree(seed in any::<u64>(), tr in any::<bool>()) {
        let pol = policy();
        let p = program(seed);
        let mode = if tr { Mode::Tr } else { Mode::StoreMatch };
        for level in pol.lattice.domains() {
            let model = compose(&build_model(&p, &pol, level, 1, 1).unwrap(), mode).unwrap();
            let Some(expected) = explicit::error_reachable(&model, 100_000) else { continue };
            let got = is_error_reachable(&model, &ReachConfig::default()).verdict;
            let want = if expected { Reachability::Reachable } else { Reachability::Unreachable };
            prop_assert_eq!(got, want, "{} at {}", p, pol.level_name(level));
        }
    }

    #[test]
    fn secure_verdicts_are_sound_and_witnesses_replay(seed in any::<u64>(), bits in 1u32..=2) {
        let pol = policy();
        let p = program(seed);
        let opts = AnalysisOptions { bits, capacity: 3, ..AnalysisOptions::default() };
        let report = analyze(&p, &pol, &opts).unwrap();
        match report.verdict() {
            Verdict::Secure => prop_assert_ne!(where_status(&p, &pol, bits), Some(Status::Insecure), "{}", p),
            Verdict::Insecure => {
                for l in report.levels.iter().filter(|l| l.verdict == Verdict::Insecure) {
                    let w = l.witness.as_ref().expect("insecure levels carry a witness");
                    prop_assert!(w.replayed(), "{}\n{}", p, w);
                }
            }
            Verdict::Inconclusive => {}
        }
    }

    #[test]
    fn modes_agree(seed in any::<u64>()) {
        let pol = policy();
        let p = program(seed);
        let verdict = |mode| {
            let opts = AnalysisOptions { bits: 1, capacity: 2, mode, witness: false, ..AnalysisOptions::default() };
            analyze(&p, &pol, &opts).unwrap().verdict()
        };
        prop_assert_eq!(verdict(Mode::StoreMatch), verdict(Mode::Tr), "{}", p);
    }

    #[test]
    fn result_lines_are_deterministic(seed in any::<u64>()) {
        let pol = policy();
        let p = program(seed);
        let opts = AnalysisOptions { bits: 2, capacity: 2, ..AnalysisOptions::default() };
        let a = analyze(&p, &pol, &opts).unwrap().result_lines();
        let b = analyze(&p, &pol, &opts).unwrap().result_lines();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn model_size_grows_with_bits(seed in any::<u64>()) {
        let pol = policy();
        let p = program(seed);
        let size = |bits| {
            let sk = build_model(&p, &pol, Domain(0), bits, 2).unwrap();
            compose(&sk, Mode::StoreMatch).unwrap().total_bits()
        };
        let (a, b, c) = (size(1), size(2), size(3));
        // counters do not depend on the value width, so only programs with variables grow
        if p.variables().is_empty() {
            prop_assert!(a <= b && b <= c);
        } else {
            prop_assert!(a < b && b < c, "{}", p);
        }
    }

    #[test]
    fn declass_free_programs_conserve_noninterference(seed in any::<u64>(), bits in 1u32..=2) {
        let pol = policy();
        let p = declass_free(seed);
        let ni = check_noninterference(&p, &pol, &oracle(bits)).ok().map(|v| v.status);
        prop_assume!(ni.is_some());
        prop_assert_eq!(where_status(&p, &pol, bits), ni, "{}", p);
    }

    #[test]
    fn declassifying_an_assignment_keeps_security(seed in any::<u64>(), bits in 1u32..=2) {
        let pol = policy();
        let p = program(seed);
        prop_assume!(where_status(&p, &pol, bits) == Some(Status::Secure));
        for site in assignment_sites(&p) {
            let q = declassify_at(&p, site).unwrap();
            prop_assert_eq!(where_status(&q, &pol, bits), Some(Status::Secure), "{} => {}", p, q);
        }
    }

    #[test]
    fn equivalent_rewrites_keep_the_verdict(seed in any::<u64>(), bits in 1u32..=2) {
        let pol = policy();
        let p = program(seed);
        let before = bounded_status(&p, &pol, bits);
        prop_assume!(before.is_some());
        for site in rewrite_sites(&p) {
            for rw in Rewrite::ALL {
                let q = rewrite_at(&p, site, rw).unwrap();
                prop_assert_eq!(bounded_status(&q, &pol, bits), before, "{} under {}", p, rw.as_str());
            }
        }
    }
}
