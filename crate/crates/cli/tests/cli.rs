use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus/declass")
        .join(name)
}

fn wherecheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wherecheck"))
        .args(args)
        .output()
        .unwrap()
}

fn analyze(program: &str, extra: &[&str]) -> Output {
    let p = corpus(program);
    let pol = corpus("policy");
    let mut args = vec!["analyze", p.to_str().unwrap(), "--policy", pol.to_str().unwrap()];
    args.extend_from_slice(extra);
    wherecheck(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn secure_program_exits_zero() {
    let o = analyze("P0", &[]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.contains("RESULT level=L verdict=secure mode=storematch bits=3 capacity=8"),
        "{out}"
    );
    assert!(out.ends_with("RESULT overall verdict=secure\n"), "{out}");
}

#[test]
fn insecure_program_exits_one_with_traces() {
    let o = analyze("P5", &["--witness", "--trace"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("counterexample at level L:"), "{out}");
    assert!(out.contains("run 1 trace from"), "{out}");
    assert!(out.contains("run 2 trace from"), "{out}");
    assert!(out.contains("mismatch=l replay=ok"), "{out}");
}

#[test]
fn oracle_line_is_printed() {
    let o = analyze("P3", &["--oracle", "--bits", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("ORACLE where-security insecure\n"));
}

#[test]
fn baseline_mode_is_selectable() {
    let o = analyze("P4", &["--mode", "tr"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("mode=tr"));
}

#[test]
fn dumps_list_globals_and_rules() {
    let out = stdout(&analyze("P0", &["--dump-model", "--dump-composed"]));
    assert!(out.contains("# model for level L"), "{out}");
    assert!(out.contains("# composed model (storematch) for level L"), "{out}");
    assert!(out.contains("@mismatch"), "{out}");
}

#[test]
fn exhausted_budget_is_inconclusive() {
    let p = corpus("P3");
    let pol = corpus("policy");
    let o = Command::new(env!("CARGO_BIN_EXE_wherecheck"))
        .args(["analyze", p.to_str().unwrap(), "--policy", pol.to_str().unwrap()])
        .env("WHERECHECK_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("reason=node-budget-exhausted"));
}

#[test]
fn nmin_reports_least_width() {
    let p = corpus("P4");
    let pol = corpus("policy");
    let o = wherecheck(&[
        "nmin",
        p.to_str().unwrap(),
        "--policy",
        pol.to_str().unwrap(),
        "--max-bits",
        "3",
    ]);
    assert_eq!(stdout(&o), "RESULT nmin=1\n");
    let p = corpus("P0");
    let o = wherecheck(&[
        "nmin",
        p.to_str().unwrap(),
        "--policy",
        pol.to_str().unwrap(),
        "--max-bits",
        "2",
    ]);
    assert_eq!(stdout(&o), "RESULT nmin=none max-bits=2\n");
}

#[test]
fn bench_compares_modes() {
    let dir = corpus("");
    let o = wherecheck(&["bench", dir.to_str().unwrap(), "--bits", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.contains("RESULT program=P3 storematch=insecure tr=insecure"),
        "{out}"
    );
    assert!(out.contains("RESULT step-ratio="), "{out}");
}

#[test]
fn usage_and_input_errors_exit_three() {
    assert_eq!(wherecheck(&["analyze"]).status.code(), Some(3));
    assert_eq!(analyze("P0", &["--mode", "bogus"]).status.code(), Some(3));
    assert_eq!(analyze("missing", &[]).status.code(), Some(3));
    assert_eq!(wherecheck(&["--help"]).status.code(), Some(0));
}
