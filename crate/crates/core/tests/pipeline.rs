use std::path::Path;

use wherecheck::analysis::{analyze, find_nmin, load_files, AnalysisOptions, Verdict};
use wherecheck::compose::Mode;

fn corpus(name: &str) -> (wherecheck::frontend::Program, wherecheck::frontend::Policy) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/declass");
    load_files(&dir.join(name), &dir.join("policy")).unwrap()
}

const EXPECTED: [(&str, bool); 8] = [
    ("P0", true),
    ("P1", true),
    ("P2", true),
    ("P3", false),
    ("P4", false),
    ("P5", false),
    ("P6", true),
    ("P7", true),
];

#[test]
fn reference_verdicts_in_both_modes() {
    for mode in [Mode::StoreMatch, Mode::Tr] {
        for (name, secure) in EXPECTED {
            let (p, pol) = corpus(name);
            let opts = AnalysisOptions {
                mode,
                ..AnalysisOptions::default()
            };
            let r = analyze(&p, &pol, &opts).unwrap();
            let want = if secure { Verdict::Secure } else { Verdict::Insecure };
            assert_eq!(r.verdict(), want, "{name} {mode}\n{}", r.render());
            for l in &r.levels {
                if let Some(w) = &l.witness {
                    assert!(w.replayed(), "{name} {mode}: {w}");
                }
            }
        }
    }
}

#[test]
fn nmin_values() {
    for (name, secure) in EXPECTED {
        let (p, pol) = corpus(name);
        let n = find_nmin(&p, &pol, 4, &AnalysisOptions::default()).unwrap();
        assert_eq!(n, if secure { None } else { Some(1) }, "{name}");
    }
}
