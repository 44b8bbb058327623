//! The analysis pipeline: model, compose and check every security level.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::compose::{compose, Mode};
use crate::error::{Error, Result};
use crate::frontend::{gather_downgrades, parse_policy, parse_program, Direction, Domain, Policy, Program};
use crate::modelgen::{build_model, count_globals};
use crate::oracle::DEFAULT_FUEL;
use crate::reach::witness::{extract_witness, Witness};
use crate::reach::{is_error_reachable, ReachConfig, Reachability};
use crate::semantics::{DEFAULT_BITS, DEFAULT_CAPACITY};

/// Default largest width tried by [`find_nmin`].
pub const DEFAULT_MAX_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub bits: u32,
    pub capacity: usize,
    pub mode: Mode,
    pub reach: ReachConfig,
    /// Extract and replay a counterexample for insecure levels.
    pub witness: bool,
    /// Interpreter fuel for witness replay.
    pub fuel: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            bits: DEFAULT_BITS,
            capacity: DEFAULT_CAPACITY,
            mode: Mode::StoreMatch,
            reach: ReachConfig::default(),
            witness: true,
            fuel: DEFAULT_FUEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Secure,
    Insecure,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Secure => "secure",
            Verdict::Insecure => "insecure",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Process exit code for the verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Secure => 0,
            Verdict::Insecure => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelStats {
    pub skeleton_rules: usize,
    pub composed_rules: usize,
    pub skeleton_bits: u32,
    pub composed_bits: u32,
    pub steps: usize,
    pub nodes: usize,
    pub micros: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelReport {
    pub level: Domain,
    pub name: String,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub reason: Option<String>,
    pub stats: LevelStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisReport {
    pub levels: Vec<LevelReport>,
    pub options: AnalysisOptions,
}

impl AnalysisReport {
    /// Secure iff every level is; insecure if any level is.
    pub fn verdict(&self) -> Verdict {
        self.levels
            .iter()
            .map(|l| l.verdict)
            .fold(Verdict::Secure, |acc, v| match (acc, v) {
                (Verdict::Insecure, _) | (_, Verdict::Insecure) => Verdict::Insecure,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
                _ => Verdict::Secure,
            })
    }

    pub fn total_steps(&self) -> usize {
        self.levels.iter().map(|l| l.stats.steps).sum()
    }

    /// Machine-readable summary. Contains no timings, so it is stable across runs.
    pub fn result_lines(&self) -> String {
        let o = &self.options;
        let mut out = String::new();
        for l in &self.levels {
            let s = &l.stats;
            let _ = write!(
                out,
                "RESULT level={} verdict={} mode={} bits={} capacity={} rules={} globals={} steps={}",
                l.name,
                l.verdict.as_str(),
                o.mode,
                o.bits,
                o.capacity,
                s.composed_rules,
                s.composed_bits,
                s.steps
            );
            if let Some(w) = &l.witness {
                let _ = write!(
                    out,
                    " mismatch={} replay={}",
                    w.observable,
                    if w.replayed() { "ok" } else { "failed" }
                );
            }
            if let Some(r) = &l.reason {
                let _ = write!(out, " reason={}", r.replace(' ', "-"));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "RESULT overall verdict={}", self.verdict().as_str());
        out
    }

    /// Human-readable report with statistics and counterexamples.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let o = &self.options;
        let _ = writeln!(
            out,
            "configuration: bits={} capacity={} mode={}",
            o.bits, o.capacity, o.mode
        );
        for l in &self.levels {
            let s = &l.stats;
            let _ = writeln!(out, "level {}: {}", l.name, l.verdict.as_str());
            let _ = writeln!(
                out,
                "  model: {} rules, {} bits; composed: {} rules, {} bits",
                s.skeleton_rules, s.skeleton_bits, s.composed_rules, s.composed_bits
            );
            let _ = writeln!(
                out,
                "  saturation: {} steps, {} nodes, {:.3} ms",
                s.steps,
                s.nodes,
                s.micros as f64 / 1000.0
            );
            if let Some(r) = &l.reason {
                let _ = writeln!(out, "  reason: {r}");
            }
            if let Some(w) = &l.witness {
                for line in w.to_string().lines() {
                    let _ = writeln!(out, "  {line}");
                }
            }
        }
        let _ = writeln!(out, "overall: {}", self.verdict().as_str());
        out
    }
}

/// Parses a program and its policy and fills in the downgrade relation.
pub fn load(program_text: &str, policy_text: &str) -> Result<(Program, Policy)> {
    let program = parse_program(program_text)?;
    let policy = gather_downgrades(&program, &parse_policy(policy_text)?)?;
    policy.check_program(&program)?;
    Ok((program, policy))
}

pub fn load_files(program: &Path, policy: &Path) -> Result<(Program, Policy)> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())));
    load(&read(program)?, &read(policy)?)
}

pub fn analyze_level(program: &Program, policy: &Policy, level: Domain, opts: &AnalysisOptions) -> Result<LevelReport> {
    let started = Instant::now();
    let sk = build_model(program, policy, level, opts.bits, opts.capacity)?;
    let model = compose(&sk, opts.mode)?;
    let reach = is_error_reachable(&model, &opts.reach);
    let (verdict, reason) = match reach.verdict {
        Reachability::Reachable => (Verdict::Insecure, None),
        Reachability::Unreachable => (Verdict::Secure, None),
        Reachability::Unknown => (Verdict::Inconclusive, Some("node budget exhausted".to_string())),
    };
    let witness = if verdict == Verdict::Insecure && opts.witness {
        extract_witness(program, policy, &sk, &model, &opts.reach, opts.fuel)
    } else {
        None
    };
    let stats = LevelStats {
        skeleton_rules: sk.spds.rules.len(),
        composed_rules: model.rule_count(),
        skeleton_bits: count_globals(&sk).total,
        composed_bits: model.total_bits(),
        steps: reach.steps,
        nodes: reach.nodes,
        micros: started.elapsed().as_micros(),
    };
    Ok(LevelReport {
        level,
        name: policy.level_name(level).to_string(),
        verdict,
        witness,
        reason,
        stats,
    })
}

/// Checks every security level of the policy's lattice.
pub fn analyze(program: &Program, policy: &Policy, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let levels = policy
        .lattice
        .domains()
        .map(|d| analyze_level(program, policy, d, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport { levels, options: *opts })
}

/// Least width in `1..=max_bits` at which the analysis finds a violation.
pub fn find_nmin(program: &Program, policy: &Policy, max_bits: u32, opts: &AnalysisOptions) -> Result<Option<u32>> {
    for bits in 1..=max_bits {
        let o = AnalysisOptions {
            bits,
            witness: false,
            ..*opts
        };
        if analyze(program, policy, &o)?.verdict() == Verdict::Insecure {
            return Ok(Some(bits));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub name: String,
    pub low_outputs: usize,
    pub storematch: ModeStats,
    pub tr: ModeStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeStats {
    pub verdict: Verdict,
    /// Largest composed bit-count over the levels.
    pub bits: u32,
    pub steps: usize,
    pub micros: u128,
}

impl BenchRow {
    pub fn agree(&self) -> bool {
        self.storematch.verdict == self.tr.verdict
    }
}

fn mode_stats(r: &AnalysisReport) -> ModeStats {
    ModeStats {
        verdict: r.verdict(),
        bits: r.levels.iter().map(|l| l.stats.composed_bits).max().unwrap_or(0),
        steps: r.total_steps(),
        micros: r.levels.iter().map(|l| l.stats.micros).sum(),
    }
}

/// Runs both composition modes on one program.
pub fn bench_program(name: &str, program: &Program, policy: &Policy, opts: &AnalysisOptions) -> Result<BenchRow> {
    let run = |mode| {
        analyze(
            program,
            policy,
            &AnalysisOptions {
                mode,
                witness: false,
                ..*opts
            },
        )
    };
    let sm = run(Mode::StoreMatch)?;
    let tr = run(Mode::Tr)?;
    // outputs some lower level observes while a higher level exists
    let low_outputs = program
        .channels()
        .iter()
        .filter(|(n, dirs)| {
            dirs.contains(&Direction::Output)
                && policy
                    .channel(n)
                    .is_ok_and(|c| policy.lattice.domains().any(|d| policy.lattice.lt(c.level, d)))
        })
        .count();
    Ok(BenchRow {
        name: name.to_string(),
        low_outputs,
        storematch: mode_stats(&sm),
        tr: mode_stats(&tr),
    })
}

/// Benchmarks every program file of a directory against its `policy` file.
pub fn bench_dir(dir: &Path, opts: &AnalysisOptions) -> Result<Vec<BenchRow>> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    let policy_path = dir.join("policy");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "policy" && !n.starts_with('.'))
        .collect();
    names.sort();
    names
        .iter()
        .map(|n| {
            let (p, pol) = load_files(&dir.join(n), &policy_path)?;
            bench_program(n, &p, &pol, opts)
        })
        .collect()
}

/// Aggregate saturation-step ratio of store-match over the baseline.
pub fn step_ratio(rows: &[BenchRow]) -> f64 {
    let sm: usize = rows.iter().map(|r| r.storematch.steps).sum();
    let tr: usize = rows.iter().map(|r| r.tr.steps).sum();
    sm as f64 / tr.max(1) as f64
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>4} {:>8} {:>8} {:>9} {:>9} {:>10} {:>10}  verdict",
        "program", "low", "sm-bits", "tr-bits", "sm-steps", "tr-steps", "sm-ms", "tr-ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>8} {:>8} {:>9} {:>9} {:>10.3} {:>10.3}  {}{}",
            r.name,
            r.low_outputs,
            r.storematch.bits,
            r.tr.bits,
            r.storematch.steps,
            r.tr.steps,
            r.storematch.micros as f64 / 1000.0,
            r.tr.micros as f64 / 1000.0,
            r.storematch.verdict.as_str(),
            if r.agree() { "" } else { " (DISAGREE)" }
        );
    }
    let _ = writeln!(out, "step ratio storematch/tr: {:.3}", step_ratio(rows));
    out
}
