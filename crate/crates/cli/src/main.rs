//! Command-line driver for the where-security checker.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wherecheck::analysis::{
    analyze, bench_dir, find_nmin, load_files, render_bench, step_ratio, AnalysisOptions, AnalysisReport,
    DEFAULT_MAX_BITS,
};
use wherecheck::compose::{compose, Mode};
use wherecheck::frontend::{Policy, Program};
use wherecheck::modelgen::build_model;
use wherecheck::oracle::{check_where_security, OracleConfig};
use wherecheck::reach::ReachConfig;
use wherecheck::semantics::{Machine, DEFAULT_BITS, DEFAULT_CAPACITY};

const USAGE_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "wherecheck",
    version,
    about = "Where-security checker for a small imperative language"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a program at every security level.
    Analyze {
        program: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BITS)]
        bits: u32,
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: usize,
        #[arg(long, default_value = "storematch")]
        mode: Mode,
        /// Print both runs of each counterexample as interpreter traces.
        #[arg(long)]
        witness: bool,
        /// Also run the brute-force oracle.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        dump_model: bool,
        #[arg(long)]
        dump_composed: bool,
        /// Print the rule-by-rule path of each counterexample through the composed model.
        #[arg(long)]
        trace: bool,
    },
    /// Least bit-width at which a violation shows up.
    Nmin {
        program: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_BITS)]
        max_bits: u32,
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: usize,
        #[arg(long, default_value = "storematch")]
        mode: Mode,
    },
    /// Compare store-match against the duplicated-channel baseline on a corpus directory.
    Bench {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BITS)]
        bits: u32,
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_ERROR)
        }
    }
}

fn run(cmd: Command) -> wherecheck::Result<u8> {
    let reach = ReachConfig::from_env();
    match cmd {
        Command::Analyze {
            program,
            policy,
            bits,
            capacity,
            mode,
            witness,
            oracle,
            dump_model,
            dump_composed,
            trace,
        } => {
            let (prog, pol) = load_files(&program, &policy)?;
            let opts = AnalysisOptions {
                bits,
                capacity,
                mode,
                reach,
                ..AnalysisOptions::default()
            };
            if dump_model || dump_composed {
                dump(&prog, &pol, &opts, dump_model, dump_composed)?;
            }
            let report = analyze(&prog, &pol, &opts)?;
            print!("{}", report.render());
            if witness || trace {
                print_witnesses(&prog, &pol, &report, witness, trace);
            }
            if oracle {
                let cfg = OracleConfig {
                    bits,
                    capacity,
                    ..OracleConfig::default()
                };
                let v = check_where_security(&prog, &pol, &cfg)?;
                if let Some(w) = &v.witness {
                    println!("oracle witness at level {}:", pol.level_name(w.level));
                    println!("  run 1: {}", w.run1);
                    println!("  run 2: {}", w.run2);
                    println!("  mismatch: {}", w.observable);
                }
                println!("{}", v.line());
            }
            print!("{}", report.result_lines());
            Ok(report.verdict().exit_code() as u8)
        }
        Command::Nmin {
            program,
            policy,
            max_bits,
            capacity,
            mode,
        } => {
            if max_bits == 0 {
                eprintln!("error: --max-bits must be at least 1");
                return Ok(USAGE_ERROR);
            }
            let (prog, pol) = load_files(&program, &policy)?;
            let opts = AnalysisOptions {
                capacity,
                mode,
                reach,
                ..AnalysisOptions::default()
            };
            match find_nmin(&prog, &pol, max_bits, &opts)? {
                Some(n) => println!("RESULT nmin={n}"),
                None => println!("RESULT nmin=none max-bits={max_bits}"),
            }
            Ok(0)
        }
        Command::Bench { dir, bits, capacity } => bench(&dir, bits, capacity, reach),
    }
}

fn bench(dir: &Path, bits: u32, capacity: usize, reach: ReachConfig) -> wherecheck::Result<u8> {
    let opts = AnalysisOptions {
        bits,
        capacity,
        reach,
        ..AnalysisOptions::default()
    };
    let rows = bench_dir(dir, &opts)?;
    print!("{}", render_bench(&rows));
    for r in &rows {
        println!(
            "RESULT program={} storematch={} tr={} sm-bits={} tr-bits={} sm-steps={} tr-steps={}",
            r.name,
            r.storematch.verdict.as_str(),
            r.tr.verdict.as_str(),
            r.storematch.bits,
            r.tr.bits,
            r.storematch.steps,
            r.tr.steps
        );
    }
    println!("RESULT step-ratio={:.3}", step_ratio(&rows));
    if rows.iter().all(|r| r.agree()) {
        Ok(0)
    } else {
        eprintln!("error: store-match and baseline verdicts disagree");
        Ok(1)
    }
}

fn dump(prog: &Program, pol: &Policy, opts: &AnalysisOptions, model: bool, composed: bool) -> wherecheck::Result<()> {
    for level in pol.lattice.domains() {
        let sk = build_model(prog, pol, level, opts.bits, opts.capacity)?;
        if model {
            println!("# model for level {}", pol.level_name(level));
            print!("{}", sk.dump());
        }
        if composed {
            println!("# composed model ({}) for level {}", opts.mode, pol.level_name(level));
            print!("{}", compose(&sk, opts.mode)?.dump());
        }
    }
    Ok(())
}

fn print_witnesses(prog: &Program, pol: &Policy, report: &AnalysisReport, traces: bool, path: bool) {
    let o = &report.options;
    for l in &report.levels {
        let Some(w) = &l.witness else { continue };
        println!("counterexample at level {}:", l.name);
        if path {
            let Ok(sk) = build_model(prog, pol, l.level, o.bits, o.capacity) else {
                continue;
            };
            let Ok(model) = compose(&sk, o.mode) else { continue };
            for step in &w.path {
                let word: Vec<&str> = step.word.iter().map(|s| model.spds.symbol_name(*s)).collect();
                let rule = step.rule.map_or("start".to_string(), |i| format!("rule {i}"));
                let vals: Vec<String> = model
                    .spds
                    .globals
                    .decls
                    .iter()
                    .zip(&step.valuation)
                    .map(|(d, v)| format!("{}={v}", d.name))
                    .collect();
                println!("  {rule:>9} <{}> {}", word.join(" "), vals.join(" "));
            }
        }
        if traces {
            let m = Machine::new(prog, pol, o.bits, o.capacity.max(w.path.len()));
            for (k, run) in [&w.run1, &w.run2].into_iter().enumerate() {
                println!("  run {} trace from {run}:", k + 1);
                let t = m.run(m.initial_named(&run.store, &run.inputs), o.fuel);
                for line in m.dump_trace(&t).lines() {
                    println!("    {line}");
                }
            }
            println!("  mismatch: {}", w.observable);
        }
    }
}
