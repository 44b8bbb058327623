//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use wherecheck::analysis::{analyze, bench_dir, find_nmin, load_files, step_ratio, AnalysisOptions, Verdict};
use wherecheck::compose::{compose, Mode};
use wherecheck::frontend::{parse_policy, Policy, Program};
use wherecheck::generate::{GenConfig, Generator, POLICY};
use wherecheck::modelgen::build_model;
use wherecheck::oracle::{check_noninterference, check_where_security, OracleConfig, Status};
use wherecheck::properties::{assignment_sites, declassify_at, rewrite_at, rewrite_sites, Rewrite};
use wherecheck::reach::{explicit, is_error_reachable, ReachConfig, Reachability};

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

const EXPLICIT_BUDGET: usize = 200_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn corpus_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn corpus_files(name: &str) -> Vec<PathBuf> {
    let dir = corpus_dir(name);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "policy"))
        .collect();
    files.sort();
    files
}

/// Runs `wherecheck analyze` and returns its exit code and `RESULT` lines.
fn cli_analyze(program: &Path) -> (i32, String) {
    let policy = program.with_file_name("policy");
    let out = Command::new(env!("CARGO_BIN_EXE_wherecheck"))
        .arg("analyze")
        .arg(program)
        .arg("--policy")
        .arg(&policy)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).expect("utf-8 output");
    let lines: String = stdout
        .lines()
        .filter(|l| l.starts_with("RESULT "))
        .map(|l| format!("{l}\n"))
        .collect();
    (out.status.code().unwrap_or(-1), lines)
}

fn name_of(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

fn corpus_verdicts(first_run: &[(PathBuf, i32, String)]) -> Outcome {
    let mut wrong = Vec::new();
    for (name, secure) in EXPECTED {
        let (_, code, lines) = first_run
            .iter()
            .find(|(p, ..)| name_of(p) == name)
            .expect("corpus program present");
        let want = if secure { "secure" } else { "insecure" };
        let ok = lines.contains(&format!("RESULT overall verdict={want}\n")) && *code == i32::from(!secure);
        if !ok {
            wrong.push(name);
        }
    }
    Outcome {
        pass: wrong.is_empty(),
        detail: format!("{}/8 programs match, mismatches {wrong:?}", 8 - wrong.len()),
    }
}

fn nmin() -> Outcome {
    let mut wrong = Vec::new();
    for (name, secure) in EXPECTED {
        let dir = corpus_dir("declass");
        let (p, pol) = load_files(&dir.join(name), &dir.join("policy")).unwrap();
        let n = find_nmin(&p, &pol, 4, &AnalysisOptions::default()).unwrap();
        if n != if secure { None } else { Some(1) } {
            wrong.push(format!("{name}={n:?}"));
        }
    }
    Outcome {
        pass: wrong.is_empty(),
        detail: format!("searched up to 4 bits, mismatches {wrong:?}"),
    }
}

#[derive(Default)]
struct Soundness {
    programs: usize,
    secure: usize,
    insecure: usize,
    inconclusive: usize,
    oracle_skipped: usize,
    unsound: Vec<String>,
    witnesses: usize,
    replay_failures: Vec<String>,
}

fn soundness(policy: &Policy) -> Soundness {
    let mut s = Soundness::default();
    let mut g = Generator::new(0x5eed, GenConfig::default());
    for i in 0..500 {
        let p = g.program();
        let bits = 1 + (i % 2) as u32;
        let capacity = 2 + i % 3;
        let opts = AnalysisOptions {
            bits,
            capacity,
            ..AnalysisOptions::default()
        };
        let report = analyze(&p, policy, &opts).unwrap();
        s.programs += 1;
        match report.verdict() {
            Verdict::Secure => {
                s.secure += 1;
                let cfg = OracleConfig {
                    bits,
                    capacity,
                    ..OracleConfig::default()
                };
                match check_where_security(&p, policy, &cfg) {
                    Ok(v) if v.status == Status::Insecure => s.unsound.push(format!("{p} (bits={bits})")),
                    Ok(_) => {}
                    Err(_) => s.oracle_skipped += 1,
                }
            }
            Verdict::Insecure => s.insecure += 1,
            Verdict::Inconclusive => s.inconclusive += 1,
        }
        witness_check(&format!("{p}"), &report, &mut s);
    }
    s
}

fn witness_check(name: &str, report: &wherecheck::analysis::AnalysisReport, s: &mut Soundness) {
    for l in report.levels.iter().filter(|l| l.verdict == Verdict::Insecure) {
        s.witnesses += 1;
        match &l.witness {
            Some(w) if w.replayed() => {}
            _ => s.replay_failures.push(format!("{name} at {}", l.name)),
        }
    }
}

fn corpus_witnesses(s: &mut Soundness) {
    let dir = corpus_dir("declass");
    for (name, _) in EXPECTED {
        let (p, pol) = load_files(&dir.join(name), &dir.join("policy")).unwrap();
        for mode in [Mode::StoreMatch, Mode::Tr] {
            let opts = AnalysisOptions {
                mode,
                ..AnalysisOptions::default()
            };
            let report = analyze(&p, &pol, &opts).unwrap();
            witness_check(&format!("{name} ({mode})"), &report, s);
        }
    }
}

fn oracle_cfg(bits: u32) -> OracleConfig {
    OracleConfig {
        bits,
        capacity: 4,
        ..OracleConfig::default()
    }
}

fn status(p: &Program, policy: &Policy, bits: u32) -> Option<Status> {
    check_where_security(p, policy, &oracle_cfg(bits))
        .ok()
        .map(|v| v.status)
}

/// Rewrites may duplicate `input`, which raises the default input bound; fix it for both sides.
fn bounded_status(p: &Program, policy: &Policy, bits: u32) -> Option<Status> {
    let cfg = OracleConfig {
        input_prefix: Some(2),
        ..oracle_cfg(bits)
    };
    check_where_security(p, policy, &cfg).ok().map(|v| v.status)
}

fn prudence(policy: &Policy) -> Outcome {
    // conservativity
    let cfg = GenConfig {
        declass: false,
        ..GenConfig::default()
    };
    let mut g = Generator::new(0xc0de, cfg);
    let (mut conservative, mut conservative_bad) = (0, Vec::new());
    while conservative < 200 {
        let p = g.program();
        let bits = 1 + (conservative % 2) as u32;
        let ws = check_where_security(&p, policy, &oracle_cfg(bits));
        let ni = check_noninterference(&p, policy, &oracle_cfg(bits));
        let (Ok(ws), Ok(ni)) = (ws, ni) else { continue };
        conservative += 1;
        if ws.status != ni.status {
            conservative_bad.push(format!("{p}"));
        }
    }

    // monotonicity
    let mut g = Generator::new(0x1a7e, GenConfig::default());
    let (mut monotone, mut substitutions, mut monotone_bad) = (0, 0, Vec::new());
    while monotone < 200 {
        let p = g.program();
        let sites = assignment_sites(&p);
        let bits = 1 + (monotone % 2) as u32;
        if sites.is_empty() || status(&p, policy, bits) != Some(Status::Secure) {
            continue;
        }
        monotone += 1;
        for site in sites {
            let q = declassify_at(&p, site).expect("assignment site");
            substitutions += 1;
            if status(&q, policy, bits) != Some(Status::Secure) {
                monotone_bad.push(format!("{p} => {q}"));
            }
        }
    }

    // semantic consistency, on the corpus programs and on generated ones
    let mut programs: Vec<Program> = EXPECTED
        .iter()
        .map(|(name, _)| {
            let dir = corpus_dir("declass");
            load_files(&dir.join(name), &dir.join("policy")).unwrap().0
        })
        .collect();
    let mut g = Generator::new(0xca7a, GenConfig::default());
    programs.extend((0..100).map(|_| g.program()));
    let (mut rewrites, mut consistency_bad) = (0, Vec::new());
    for (k, p) in programs.iter().enumerate() {
        let bits = 1 + (k % 2) as u32;
        let Some(before) = bounded_status(p, policy, bits) else {
            continue;
        };
        for site in rewrite_sites(p) {
            for rw in Rewrite::ALL {
                let q = rewrite_at(p, site, rw).expect("declass-free site");
                rewrites += 1;
                if bounded_status(&q, policy, bits) != Some(before) {
                    consistency_bad.push(format!("{p} under {}", rw.as_str()));
                }
            }
        }
    }

    let pass = conservative_bad.is_empty() && monotone_bad.is_empty() && consistency_bad.is_empty();
    let mut detail = format!(
        "conservativity {}/{conservative} agree; monotonicity {monotone} programs, {substitutions} substitutions, {} breaks; consistency {rewrites} rewrites, {} changes",
        conservative - conservative_bad.len(),
        monotone_bad.len(),
        consistency_bad.len()
    );
    for bad in conservative_bad
        .iter()
        .chain(&monotone_bad)
        .chain(&consistency_bad)
        .take(5)
    {
        detail.push_str(&format!("\n    counterexample: {bad}"));
    }
    Outcome { pass, detail }
}

/// Compares the two backends on one model; `None` when outside the explicit budget.
fn backends_agree(p: &Program, policy: &Policy, mode: Mode, bits: u32, capacity: usize) -> Vec<Option<bool>> {
    let reach = ReachConfig::default();
    policy
        .lattice
        .domains()
        .map(|level| {
            let sk = build_model(p, policy, level, bits, capacity).unwrap();
            let model = compose(&sk, mode).unwrap();
            let expected = explicit::error_reachable(&model, EXPLICIT_BUDGET)?;
            let symbolic = match is_error_reachable(&model, &reach).verdict {
                Reachability::Reachable => true,
                Reachability::Unreachable => false,
                Reachability::Unknown => return Some(false),
            };
            Some(symbolic == expected)
        })
        .collect()
}

fn backend_equivalence(policy: &Policy) -> Outcome {
    let (mut corpus_models, mut corpus_skipped, mut bad) = (0, 0, Vec::new());
    for set in ["declass", "io"] {
        for file in corpus_files(set) {
            let (p, pol) = load_files(&file, &file.with_file_name("policy")).unwrap();
            for mode in [Mode::StoreMatch, Mode::Tr] {
                for r in backends_agree(&p, &pol, mode, 1, 1) {
                    match r {
                        Some(true) => corpus_models += 1,
                        Some(false) => bad.push(format!("{set}/{} ({mode})", name_of(&file))),
                        None => corpus_skipped += 1,
                    }
                }
            }
        }
    }
    let mut g = Generator::new(0xbac4, GenConfig::default());
    let (mut random_models, mut random_skipped) = (0, 0);
    while random_models < 100 {
        let p = g.program();
        let mode = if random_models % 2 == 0 {
            Mode::StoreMatch
        } else {
            Mode::Tr
        };
        for r in backends_agree(&p, policy, mode, 1, 1) {
            match r {
                Some(true) => random_models += 1,
                Some(false) => bad.push(format!("{p} ({mode})")),
                None => random_skipped += 1,
            }
        }
    }
    Outcome {
        pass: bad.is_empty() && corpus_models > 0,
        detail: format!(
            "corpus {corpus_models} models agree ({corpus_skipped} over the explicit budget); random {random_models} models agree ({random_skipped} over budget); disagreements {bad:?}"
        ),
    }
}

fn economy() -> Outcome {
    let rows = bench_dir(&corpus_dir("io"), &AnalysisOptions::default()).unwrap();
    let smaller = rows
        .iter()
        .filter(|r| r.low_outputs > 0)
        .all(|r| r.storematch.bits < r.tr.bits);
    let agree = rows.iter().all(|r| r.agree());
    let ratio = step_ratio(&rows);
    let bits: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{}<{}", r.name, r.storematch.bits, r.tr.bits))
        .collect();
    Outcome {
        pass: rows.len() == 8 && smaller && agree && ratio < 1.0,
        detail: format!(
            "{} programs, bits {}, verdicts agree={agree}, step ratio {ratio:.3}",
            rows.len(),
            bits.join(" ")
        ),
    }
}

fn report(n: usize, name: &str, o: &Outcome, started: Instant, failures: &mut usize) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    *failures += usize::from(!o.pass);
    println!(
        "{tag} criterion {n} {name}: {} [{:.1}s]",
        o.detail,
        started.elapsed().as_secs_f64()
    );
}

fn main() {
    let policy = parse_policy(POLICY).unwrap();
    let mut failures = 0;

    let t = Instant::now();
    let files: Vec<PathBuf> = corpus_files("declass").into_iter().chain(corpus_files("io")).collect();
    let first: Vec<(PathBuf, i32, String)> = files
        .iter()
        .map(|f| {
            let (code, lines) = cli_analyze(f);
            (f.clone(), code, lines)
        })
        .collect();
    report(1, "corpus verdicts", &corpus_verdicts(&first), t, &mut failures);

    let t = Instant::now();
    report(2, "nmin", &nmin(), t, &mut failures);

    let t = Instant::now();
    let mut s = soundness(&policy);
    let o = Outcome {
        pass: s.unsound.is_empty() && s.programs >= 500,
        detail: format!(
            "{} programs: {} secure, {} insecure, {} inconclusive; oracle disagreements {} ({} over the oracle budget) {:?}",
            s.programs,
            s.secure,
            s.insecure,
            s.inconclusive,
            s.unsound.len(),
            s.oracle_skipped,
            s.unsound
        ),
    };
    report(3, "soundness", &o, t, &mut failures);

    let t = Instant::now();
    corpus_witnesses(&mut s);
    let o = Outcome {
        pass: s.replay_failures.is_empty(),
        detail: format!(
            "{}/{} witnesses replay {:?}",
            s.witnesses - s.replay_failures.len(),
            s.witnesses,
            s.replay_failures
        ),
    };
    report(4, "witness replay", &o, t, &mut failures);

    let t = Instant::now();
    report(5, "prudent principles", &prudence(&policy), t, &mut failures);

    let t = Instant::now();
    report(
        6,
        "backend equivalence",
        &backend_equivalence(&policy),
        t,
        &mut failures,
    );

    let t = Instant::now();
    report(7, "store-match economy", &economy(), t, &mut failures);

    let t = Instant::now();
    let changed: Vec<String> = first
        .iter()
        .filter(|(f, _, lines)| cli_analyze(f).1 != *lines)
        .map(|(f, ..)| name_of(f))
        .collect();
    let o = Outcome {
        pass: changed.is_empty() && first.iter().all(|(_, _, l)| !l.is_empty()),
        detail: format!("{} programs analyzed twice, differing output {changed:?}", first.len()),
    };
    report(8, "determinism", &o, t, &mut failures);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
