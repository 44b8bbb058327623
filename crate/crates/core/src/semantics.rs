//! Small-step interpreter and ℓ-indistinguishability relations.

use rustc_hash::FxHashSet;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::frontend::{ast::width_mask, Command, DeclassMode, Direction, Domain, Policy, Program, SiteId};

/// Default bound on the number of values written to any output channel.
pub const DEFAULT_CAPACITY: usize = 8;
/// Default value width in bits.
pub const DEFAULT_BITS: u32 = 3;

/// Variable store keyed by name, used at API boundaries.
pub type Store = BTreeMap<String, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepLabel {
    Plain,
    Declass { site: SiteId, value: u64 },
    Halted,
    InputExhausted,
    CapacityExceeded,
}

impl StepLabel {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            StepLabel::Halted | StepLabel::InputExhausted | StepLabel::CapacityExceeded
        )
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Halted,
    InputExhausted,
    CapacityExceeded,
    /// A configuration repeated, so the run never terminates.
    Diverged,
    /// Fuel ran out before any of the above was established.
    OutOfFuel,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Halted => "halted",
            Outcome::InputExhausted => "input-exhausted",
            Outcome::CapacityExceeded => "capacity-exceeded",
            Outcome::Diverged => "diverged",
            Outcome::OutOfFuel => "nonterminating-within-budget",
        }
    }
}

/// Static execution context: variable and channel numbering plus value width and capacity.
#[derive(Debug, Clone)]
pub struct Machine<'p> {
    pub program: &'p Program,
    pub policy: &'p Policy,
    pub bits: u32,
    pub capacity: usize,
    /// Program variables in sorted order; stores are indexed by position here.
    pub vars: Vec<String>,
    /// Channels used by the program, sorted.
    pub channels: Vec<String>,
    pub directions: Vec<Direction>,
}

/// Interpreter state. `outs[i].len()` always equals `q[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration<'p> {
    pub store: Vec<u64>,
    pub ins: Vec<Vec<u64>>,
    pub outs: Vec<Vec<u64>>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    /// Remaining command as a continuation stack; the top is the last element.
    pub stack: Vec<&'p Command>,
}

impl Configuration<'_> {
    pub fn is_terminated(&self) -> bool {
        self.stack.is_empty()
    }

    /// Everything that determines the future of a run (outputs only grow with `q`).
    fn key(&self) -> Vec<usize> {
        let mut k = Vec::with_capacity(self.store.len() + 2 * self.p.len() + self.stack.len());
        k.extend(self.store.iter().map(|&v| v as usize));
        k.extend(&self.p);
        k.extend(&self.q);
        k.extend(self.stack.iter().map(|&c| c as *const Command as usize));
        k
    }
}

/// One executed step as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub site: Option<SiteId>,
    pub rule: &'static str,
    pub label: StepLabel,
    pub changes: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace<'p> {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub last: Configuration<'p>,
}

/// Summary of a complete run, without the per-step trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult<'p> {
    pub outcome: Outcome,
    pub last: Configuration<'p>,
    /// Real declassifications in execution order.
    pub declass: Vec<(SiteId, u64)>,
    pub steps: usize,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, policy: &'p Policy, bits: u32, capacity: usize) -> Self {
        let vars: Vec<String> = program.variables().into_iter().collect();
        let (channels, directions) = program
            .channels()
            .into_iter()
            .map(|(name, dirs)| (name, dirs[0]))
            .unzip();
        Machine {
            program,
            policy,
            bits,
            capacity,
            vars,
            channels,
            directions,
        }
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.binary_search_by(|v| v.as_str().cmp(name)).ok()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }

    /// Initial configuration; `ins` is indexed like [`Machine::channels`] (output slots ignored).
    pub fn initial(&self, store: Vec<u64>, ins: Vec<Vec<u64>>) -> Configuration<'p> {
        let mask = width_mask(self.bits);
        let n = self.channels.len();
        let mut ins = ins;
        ins.resize(n, Vec::new());
        Configuration {
            store: store.into_iter().map(|v| v & mask).collect(),
            ins: ins
                .into_iter()
                .map(|c| c.into_iter().map(|v| v & mask).collect())
                .collect(),
            outs: vec![Vec::new(); n],
            p: vec![0; n],
            q: vec![0; n],
            stack: vec![&self.program.root],
        }
    }

    /// Builds an initial configuration from named values; missing variables default to 0.
    pub fn initial_named(&self, store: &Store, ins: &BTreeMap<String, Vec<u64>>) -> Configuration<'p> {
        let s = self.vars.iter().map(|v| store.get(v).copied().unwrap_or(0)).collect();
        let i = self
            .channels
            .iter()
            .map(|c| ins.get(c).cloned().unwrap_or_default())
            .collect();
        self.initial(s, i)
    }

    pub fn named_store(&self, store: &[u64]) -> Store {
        self.vars.iter().cloned().zip(store.iter().copied()).collect()
    }

    fn eval(&self, store: &[u64], e: &crate::frontend::Expr) -> u64 {
        e.eval(self.bits, &|name| self.var_index(name).map(|i| store[i]).unwrap_or(0))
    }

    /// Performs one step in place and returns the applied rule name and label.
    /// Terminal labels leave the configuration unchanged.
    pub fn step(&self, c: &mut Configuration<'p>) -> (Option<SiteId>, &'static str, StepLabel) {
        loop {
            let Some(&top) = c.stack.last() else {
                return (None, "halt", StepLabel::Halted);
            };
            if let Command::Seq(a, b) = top {
                c.stack.pop();
                c.stack.push(b);
                c.stack.push(a);
                continue;
            }
            if c.stack.len() == 1 && matches!(top, Command::Skip { .. }) {
                return (top.site(), "halt", StepLabel::Halted);
            }
            let site = top.site();
            let (rule, label) = match top {
                Command::Skip { .. } => {
                    c.stack.pop();
                    ("skip", StepLabel::Plain)
                }
                Command::Assign { target, expr, .. } => {
                    let v = self.eval(&c.store, expr);
                    c.store[self.var_index(target).expect("declared")] = v;
                    c.stack.pop();
                    ("assign", StepLabel::Plain)
                }
                Command::Declass { site, target, expr, .. } => {
                    let v = self.eval(&c.store, expr);
                    c.store[self.var_index(target).expect("declared")] = v;
                    c.stack.pop();
                    match self.policy.declass_mode(*site) {
                        DeclassMode::Ordinary => ("declass-ordinary", StepLabel::Plain),
                        DeclassMode::Downgrade => ("declass", StepLabel::Declass { site: *site, value: v }),
                    }
                }
                Command::If {
                    cond,
                    then_branch,
                    else_branch,
                    ..
                } => {
                    c.stack.pop();
                    if self.eval(&c.store, cond) != 0 {
                        c.stack.push(then_branch);
                        ("if-true", StepLabel::Plain)
                    } else {
                        c.stack.push(else_branch);
                        ("if-false", StepLabel::Plain)
                    }
                }
                Command::While { cond, body, .. } => {
                    if self.eval(&c.store, cond) != 0 {
                        c.stack.push(body);
                        ("while-true", StepLabel::Plain)
                    } else {
                        c.stack.pop();
                        ("while-false", StepLabel::Plain)
                    }
                }
                Command::Input { target, channel, .. } => {
                    let i = self.channel_index(channel).expect("declared");
                    if c.p[i] >= c.ins[i].len() {
                        return (site, "input-exhausted", StepLabel::InputExhausted);
                    }
                    c.store[self.var_index(target).expect("declared")] = c.ins[i][c.p[i]];
                    c.p[i] += 1;
                    c.stack.pop();
                    ("input", StepLabel::Plain)
                }
                Command::Output { expr, channel, .. } => {
                    let i = self.channel_index(channel).expect("declared");
                    if c.q[i] >= self.capacity {
                        return (site, "capacity-exceeded", StepLabel::CapacityExceeded);
                    }
                    let v = self.eval(&c.store, expr);
                    c.outs[i].push(v);
                    c.q[i] += 1;
                    c.stack.pop();
                    ("output", StepLabel::Plain)
                }
                Command::Seq(..) => unreachable!(),
            };
            return (site, rule, label);
        }
    }

    fn has_loop(&self) -> bool {
        let mut found = false;
        self.program.root.walk(&mut |c| {
            found |= matches!(c, Command::While { .. });
        });
        found
    }

    /// Runs to completion without recording a trace. Repeated configurations are detected
    /// and reported as [`Outcome::Diverged`].
    pub fn execute(&self, mut c: Configuration<'p>, fuel: usize) -> RunResult<'p> {
        let mut seen = if self.has_loop() {
            Some(FxHashSet::default())
        } else {
            None
        };
        let mut declass = Vec::new();
        let mut steps = 0;
        loop {
            if steps >= fuel {
                return RunResult {
                    outcome: Outcome::OutOfFuel,
                    last: c,
                    declass,
                    steps,
                };
            }
            if let Some(seen) = seen.as_mut() {
                if !seen.insert(c.key()) {
                    return RunResult {
                        outcome: Outcome::Diverged,
                        last: c,
                        declass,
                        steps,
                    };
                }
            }
            let (_, _, label) = self.step(&mut c);
            let outcome = match label {
                StepLabel::Halted => Some(Outcome::Halted),
                StepLabel::InputExhausted => Some(Outcome::InputExhausted),
                StepLabel::CapacityExceeded => Some(Outcome::CapacityExceeded),
                StepLabel::Declass { site, value } => {
                    declass.push((site, value));
                    None
                }
                StepLabel::Plain => None,
            };
            if let Some(outcome) = outcome {
                return RunResult {
                    outcome,
                    last: c,
                    declass,
                    steps,
                };
            }
            steps += 1;
        }
    }

    /// Runs with a per-step trace; only fuel bounds the run.
    pub fn run(&self, mut c: Configuration<'p>, fuel: usize) -> Trace<'p> {
        let mut steps = Vec::new();
        for _ in 0..=fuel {
            let before = c.clone();
            let (site, rule, label) = self.step(&mut c);
            let changes = self.diff(&before, &c);
            steps.push(TraceStep {
                site,
                rule,
                label,
                changes,
            });
            let outcome = match label {
                StepLabel::Halted => Outcome::Halted,
                StepLabel::InputExhausted => Outcome::InputExhausted,
                StepLabel::CapacityExceeded => Outcome::CapacityExceeded,
                _ => continue,
            };
            return Trace {
                steps,
                outcome,
                last: c,
            };
        }
        steps.pop();
        Trace {
            steps,
            outcome: Outcome::OutOfFuel,
            last: c,
        }
    }

    fn diff(&self, a: &Configuration, b: &Configuration) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for (i, name) in self.vars.iter().enumerate() {
            if a.store[i] != b.store[i] {
                out.push((name.clone(), b.store[i]));
            }
        }
        for (i, name) in self.channels.iter().enumerate() {
            if a.p[i] != b.p[i] {
                out.push((format!("p[{name}]"), b.p[i] as u64));
            }
            if a.q[i] != b.q[i] {
                out.push((format!("{name}[{}]", a.q[i]), b.outs[i][a.q[i]]));
            }
        }
        out
    }

    /// Renders a trace as `site | rule-name | label | changed-bindings` lines.
    pub fn dump_trace(&self, trace: &Trace) -> String {
        let mut out = String::new();
        for s in &trace.steps {
            let site = s.site.map_or("-".to_string(), |s| s.to_string());
            let label = match s.label {
                StepLabel::Plain => "plain".to_string(),
                StepLabel::Declass { site, value } => format!("declass({site}, {value})"),
                StepLabel::Halted => "halted".to_string(),
                StepLabel::InputExhausted => "input-exhausted".to_string(),
                StepLabel::CapacityExceeded => "capacity-exceeded".to_string(),
            };
            let changes: Vec<String> = s.changes.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(out, "{site} | {} | {label} | {}", s.rule, changes.join(", "));
        }
        if trace.outcome == Outcome::OutOfFuel {
            out.push_str("- | fuel | nonterminating-within-budget |\n");
        }
        out
    }

    /// Variable-store equivalence at `level` over positional stores.
    pub fn low_equiv_store(&self, a: &[u64], b: &[u64], level: Domain) -> bool {
        self.vars
            .iter()
            .enumerate()
            .all(|(i, v)| !self.policy.var_visible(v, level) || a[i] == b[i])
    }

    /// Output-channel equivalence at `level`: equal write counts and contents on every
    /// observable output channel.
    pub fn low_equiv_outputs(&self, a: &Configuration, b: &Configuration, level: Domain) -> bool {
        self.channels.iter().enumerate().all(|(i, name)| {
            self.directions[i] != Direction::Output
                || !self.policy.channel_visible(name, level)
                || (a.q[i] == b.q[i] && a.outs[i] == b.outs[i])
        })
    }
}

/// Store low-equivalence: every variable at or below `level` agrees.
pub fn low_equiv_store(mu1: &Store, mu2: &Store, level: Domain, policy: &Policy) -> bool {
    mu1.iter()
        .all(|(x, v)| !policy.var_visible(x, level) || mu2.get(x).is_some_and(|w| w == v))
        && mu2.keys().all(|x| !policy.var_visible(x, level) || mu1.contains_key(x))
}

/// A channel's contents together with its read or write index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    pub content: Vec<u64>,
    pub index: usize,
}

/// Channel low-equivalence: an observable channel must agree on its index and on the
/// prefix before it; unobservable channels always agree.
pub fn low_equiv_channels(name: &str, a: &ChannelState, b: &ChannelState, level: Domain, policy: &Policy) -> bool {
    if !policy.channel_visible(name, level) {
        return true;
    }
    a.index == b.index
        && a.content.len() >= a.index
        && b.content.len() >= b.index
        && a.content[..a.index] == b.content[..b.index]
}
