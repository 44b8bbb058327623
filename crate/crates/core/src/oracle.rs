//! Brute-force noninterference and where-security checks by exhaustive enumeration.
//!
//! For each level ℓ, initial states are split into an ℓ-observable part (low variables and
//! observable input channel contents) shared by both runs and an unobservable part chosen
//! independently per run. Every unordered pair of unobservable parts is judged.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::frontend::{Direction, Domain, Policy, Program, SiteId};
use crate::semantics::{Machine, Outcome, RunResult, Store};

/// Default step budget per run.
pub const DEFAULT_FUEL: usize = 10_000;
/// Default cap on the number of judged pairs.
pub const DEFAULT_PAIR_BUDGET: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Noninterference,
    WhereSecurity,
}

impl Property {
    pub fn as_str(self) -> &'static str {
        match self {
            Property::Noninterference => "noninterference",
            Property::WhereSecurity => "where-security",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Secure,
    Insecure,
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Secure => "secure",
            Status::Insecure => "insecure",
            Status::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub bits: u32,
    pub capacity: usize,
    pub fuel: usize,
    pub budget: u128,
    /// Input contents enumerated per channel; `None` uses the program's static input count.
    pub input_prefix: Option<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            bits: crate::semantics::DEFAULT_BITS,
            capacity: crate::semantics::DEFAULT_CAPACITY,
            fuel: DEFAULT_FUEL,
            budget: DEFAULT_PAIR_BUDGET,
            input_prefix: None,
        }
    }
}

/// Initial store and input channel contents of one run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InitialState {
    pub store: Store,
    pub inputs: BTreeMap<String, Vec<u64>>,
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.store.iter().map(|(k, v)| format!("{k}={v}")).collect();
        for (ch, vals) in &self.inputs {
            let vals: Vec<String> = vals.iter().map(u64::to_string).collect();
            parts.push(format!("{ch}=[{}]", vals.join(",")));
        }
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleWitness {
    pub level: Domain,
    pub run1: InitialState,
    pub run2: InitialState,
    /// The observable on which the final states differ, e.g. `l` or `out0[1]`.
    pub observable: String,
    pub declass1: Vec<(SiteId, u64)>,
    pub declass2: Vec<(SiteId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub property: Property,
    pub status: Status,
    pub witness: Option<OracleWitness>,
    pub pairs: u128,
}

impl OracleVerdict {
    pub fn secure(&self) -> bool {
        self.status == Status::Secure
    }

    /// The machine-readable verdict line.
    pub fn line(&self) -> String {
        format!("ORACLE {} {}", self.property.as_str(), self.status.as_str())
    }
}

/// Judgement of a single pair of runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairJudgement {
    /// The property's premise or termination requirement does not hold; nothing to check.
    Vacuous,
    Compliant,
    /// A run exhausted its fuel, so the pair could not be judged.
    Unknown,
    Violation(String),
}

/// Judges two completed runs started from ℓ-equivalent states.
///
/// Where-security pairs the k-th declassification at a site in one run with the k-th at the
/// same site in the other; the premise requires every such pair to release equal values.
/// Paired steps assign the same variable the same value, so a declassification step can
/// never itself break ℓ-equivalence and only the final states need comparing.
pub fn judge_pair(m: &Machine, level: Domain, property: Property, r1: &RunResult, r2: &RunResult) -> PairJudgement {
    if r1.outcome == Outcome::OutOfFuel || r2.outcome == Outcome::OutOfFuel {
        return PairJudgement::Unknown;
    }
    if r1.outcome != Outcome::Halted || r2.outcome != Outcome::Halted {
        return PairJudgement::Vacuous;
    }
    if property == Property::WhereSecurity && !declass_premise(&r1.declass, &r2.declass) {
        return PairJudgement::Vacuous;
    }
    match first_difference(m, level, r1, r2) {
        Some(obs) => PairJudgement::Violation(obs),
        None => PairJudgement::Compliant,
    }
}

fn declass_premise(d1: &[(SiteId, u64)], d2: &[(SiteId, u64)]) -> bool {
    let mut by_site: BTreeMap<SiteId, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for &(s, v) in d1 {
        by_site.entry(s).or_default().0.push(v);
    }
    for &(s, v) in d2 {
        by_site.entry(s).or_default().1.push(v);
    }
    by_site.values().all(|(a, b)| a.iter().zip(b).all(|(x, y)| x == y))
}

fn first_difference(m: &Machine, level: Domain, r1: &RunResult, r2: &RunResult) -> Option<String> {
    let (a, b) = (&r1.last, &r2.last);
    for (i, v) in m.vars.iter().enumerate() {
        if m.policy.var_visible(v, level) && a.store[i] != b.store[i] {
            return Some(v.clone());
        }
    }
    for (i, ch) in m.channels.iter().enumerate() {
        if m.directions[i] != Direction::Output || !m.policy.channel_visible(ch, level) {
            continue;
        }
        if let Some(k) = (0..a.q[i].min(b.q[i])).find(|&k| a.outs[i][k] != b.outs[i][k]) {
            return Some(format!("{ch}[{k}]"));
        }
        if a.q[i] != b.q[i] {
            return Some(format!("{ch}[{}]", a.q[i].min(b.q[i])));
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Var(usize),
    Cell(usize, usize),
}

/// Enumeration layout for one level.
struct Layout {
    low: Vec<Slot>,
    high: Vec<Slot>,
    lengths: Vec<usize>,
}

impl Layout {
    fn new(m: &Machine, level: Domain, cfg: &OracleConfig) -> Layout {
        let counts = m.program.static_input_counts();
        let mut low = Vec::new();
        let mut high = Vec::new();
        for (i, v) in m.vars.iter().enumerate() {
            if m.policy.var_visible(v, level) {
                low.push(Slot::Var(i));
            } else {
                high.push(Slot::Var(i));
            }
        }
        let mut lengths = vec![0; m.channels.len()];
        for (i, ch) in m.channels.iter().enumerate() {
            if m.directions[i] != Direction::Input {
                continue;
            }
            let declared = m.policy.channels.get(ch).and_then(|c| c.length).unwrap_or(cfg.capacity);
            let wanted = cfg.input_prefix.unwrap_or_else(|| counts.get(ch).copied().unwrap_or(0));
            lengths[i] = wanted.min(declared);
            let dest = if m.policy.channel_visible(ch, level) {
                &mut low
            } else {
                &mut high
            };
            dest.extend((0..lengths[i]).map(|k| Slot::Cell(i, k)));
        }
        Layout { low, high, lengths }
    }

    fn space(slots: usize, bits: u32) -> u128 {
        1u128.checked_shl(bits * slots as u32).unwrap_or(u128::MAX)
    }

    fn fill(&self, bits: u32, slots: &[Slot], mut index: u64, store: &mut [u64], ins: &mut [Vec<u64>]) {
        let mask = (1u64 << bits) - 1;
        for slot in slots.iter().rev() {
            let v = index & mask;
            index >>= bits;
            match *slot {
                Slot::Var(i) => store[i] = v,
                Slot::Cell(c, k) => ins[c][k] = v,
            }
        }
    }

    fn initial(&self, m: &Machine, low: u64, high: u64) -> (Vec<u64>, Vec<Vec<u64>>) {
        let mut store = vec![0; m.vars.len()];
        let mut ins: Vec<Vec<u64>> = self.lengths.iter().map(|&n| vec![0; n]).collect();
        self.fill(m.bits, &self.low, low, &mut store, &mut ins);
        self.fill(m.bits, &self.high, high, &mut store, &mut ins);
        (store, ins)
    }
}

fn initial_state(m: &Machine, store: &[u64], ins: &[Vec<u64>]) -> InitialState {
    InitialState {
        store: m.named_store(store),
        inputs: m
            .channels
            .iter()
            .enumerate()
            .filter(|(i, _)| m.directions[*i] == Direction::Input)
            .map(|(i, c)| (c.clone(), ins[i].clone()))
            .collect(),
    }
}

/// Number of ordered pairs the check would judge; used for budget guards.
pub fn enumeration_size(program: &Program, policy: &Policy, cfg: &OracleConfig) -> u128 {
    let m = Machine::new(program, policy, cfg.bits, cfg.capacity);
    policy
        .lattice
        .domains()
        .map(|level| {
            let layout = Layout::new(&m, level, cfg);
            let h = Layout::space(layout.high.len(), cfg.bits);
            Layout::space(layout.low.len(), cfg.bits).saturating_mul(h.saturating_mul(h))
        })
        .fold(0u128, u128::saturating_add)
}

fn check(property: Property, program: &Program, policy: &Policy, cfg: &OracleConfig) -> Result<OracleVerdict> {
    let needed = enumeration_size(program, policy, cfg);
    if needed > cfg.budget {
        return Err(Error::EnumerationBudget {
            needed,
            budget: cfg.budget,
        });
    }
    let m = Machine::new(program, policy, cfg.bits, cfg.capacity);
    let mut unknown = false;
    let mut pairs = 0u128;
    for level in policy.lattice.domains() {
        let layout = Layout::new(&m, level, cfg);
        let lows = Layout::space(layout.low.len(), cfg.bits) as u64;
        let highs = Layout::space(layout.high.len(), cfg.bits) as u64;
        for low in 0..lows {
            let runs: Vec<RunResult> = (0..highs)
                .map(|high| {
                    let (store, ins) = layout.initial(&m, low, high);
                    m.execute(m.initial(store, ins), cfg.fuel)
                })
                .collect();
            for i in 0..runs.len() {
                for j in (i + 1)..runs.len() {
                    pairs += 1;
                    match judge_pair(&m, level, property, &runs[i], &runs[j]) {
                        PairJudgement::Vacuous | PairJudgement::Compliant => {}
                        PairJudgement::Unknown => unknown = true,
                        PairJudgement::Violation(observable) => {
                            let (s1, i1) = layout.initial(&m, low, i as u64);
                            let (s2, i2) = layout.initial(&m, low, j as u64);
                            return Ok(OracleVerdict {
                                property,
                                status: Status::Insecure,
                                witness: Some(OracleWitness {
                                    level,
                                    run1: initial_state(&m, &s1, &i1),
                                    run2: initial_state(&m, &s2, &i2),
                                    observable,
                                    declass1: runs[i].declass.clone(),
                                    declass2: runs[j].declass.clone(),
                                }),
                                pairs,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(OracleVerdict {
        property,
        status: if unknown { Status::Inconclusive } else { Status::Secure },
        witness: None,
        pairs,
    })
}

pub fn check_noninterference(program: &Program, policy: &Policy, cfg: &OracleConfig) -> Result<OracleVerdict> {
    check(Property::Noninterference, program, policy, cfg)
}

pub fn check_where_security(program: &Program, policy: &Policy, cfg: &OracleConfig) -> Result<OracleVerdict> {
    check(Property::WhereSecurity, program, policy, cfg)
}

/// Runs the two initial states and judges the resulting pair.
pub fn replay_pair(
    program: &Program,
    policy: &Policy,
    cfg: &OracleConfig,
    level: Domain,
    property: Property,
    run1: &InitialState,
    run2: &InitialState,
) -> PairJudgement {
    let m = Machine::new(program, policy, cfg.bits, cfg.capacity);
    let r1 = m.execute(m.initial_named(&run1.store, &run1.inputs), cfg.fuel);
    let r2 = m.execute(m.initial_named(&run2.store, &run2.inputs), cfg.fuel);
    judge_pair(&m, level, property, &r1, &r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{gather_downgrades, parse_policy, parse_program};

    const POLICY: &str = "lattice: L < H\nvar h : H\nvar h1 : H\nvar h2 : H\nvar l : L\nvar l1 : L\nvar l2 : L\nchannel out0 : L output\nchannel outH : H output\nchannel in0 : L input\nchannel inH : H input\n";

    fn verdict(src: &str, property: Property, bits: u32) -> OracleVerdict {
        let prog = parse_program(src).unwrap();
        let pol = gather_downgrades(&prog, &parse_policy(POLICY).unwrap()).unwrap();
        let cfg = OracleConfig {
            bits,
            ..OracleConfig::default()
        };
        check(property, &prog, &pol, &cfg).unwrap()
    }

    #[test]
    fn direct_flow_is_insecure() {
        let v = verdict("l:=h", Property::Noninterference, 1);
        assert_eq!(v.status, Status::Insecure);
        let w = v.witness.clone().unwrap();
        assert_eq!(w.run1.store["h"], 0);
        assert_eq!(w.run2.store["h"], 1);
        assert_eq!(w.observable, "l");
        assert_eq!(v.line(), "ORACLE noninterference insecure");
    }

    #[test]
    fn trivial_programs_are_secure() {
        assert!(verdict("skip", Property::Noninterference, 2).secure());
        assert!(verdict("h:=l", Property::Noninterference, 2).secure());
    }

    #[test]
    fn table_programs() {
        let cases = [
            ("l:=h;l:=declass(h)", true),
            ("l:=declass(h);l:=h", true),
            ("h1:=h2;l:=declass(h1)", true),
            ("h1:=h2;h2:=0;l1:=declass(h2);h2:=h1;l2:=h2", false),
            ("h2:=0;if h1 then l:=declass(h1) else l:=declass(h2) fi", false),
            ("l:=0;if l then l:=declass(h) else skip fi;l:=h", false),
            ("h2:=0;if h1 then l:=declass(h2) else l:=0 fi", true),
            ("l:=declass(h!=0);if l then l1:=declass(h1) else skip fi", true),
        ];
        for (src, secure) in cases {
            for bits in 1..=2 {
                let v = verdict(src, Property::WhereSecurity, bits);
                assert_eq!(v.secure(), secure, "{src} at {bits} bits");
            }
        }
    }

    #[test]
    fn p3_witness_has_equal_declassified_values() {
        let v = verdict("h1:=h2;h2:=0;l1:=declass(h2);h2:=h1;l2:=h2", Property::WhereSecurity, 1);
        let w = v.witness.unwrap();
        assert_eq!(w.declass1, w.declass2);
        assert_eq!(w.observable, "l2");
    }

    #[test]
    fn output_channels_are_compared() {
        assert!(!verdict("output(h, out0)", Property::Noninterference, 1).secure());
        assert!(verdict("output(h, outH)", Property::Noninterference, 1).secure());
        let v = verdict("if h then output(1, out0) else skip fi", Property::Noninterference, 1);
        assert_eq!(v.witness.unwrap().observable, "out0[0]");
    }

    #[test]
    fn inputs_follow_their_level() {
        assert!(verdict("input(l, in0)", Property::Noninterference, 2).secure());
        assert!(!verdict("input(l, inH)", Property::Noninterference, 2).secure());
        assert!(verdict("input(h, inH); l := declass(h)", Property::WhereSecurity, 1).secure());
    }

    #[test]
    fn nonterminating_runs_impose_nothing() {
        assert!(verdict("while h do skip od; l := 1", Property::Noninterference, 1).secure());
        let v = verdict("l := h; while 1 do skip od", Property::Noninterference, 1);
        assert!(v.secure());
    }

    #[test]
    fn budget_is_enforced() {
        let prog = parse_program("l := h + h1 + h2").unwrap();
        let pol = parse_policy(POLICY).unwrap();
        let cfg = OracleConfig {
            bits: 8,
            budget: 1000,
            ..OracleConfig::default()
        };
        assert!(matches!(
            check_noninterference(&prog, &pol, &cfg),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn replay_reproduces_witness() {
        let prog = parse_program("l:=0;if l then l:=declass(h) else skip fi;l:=h").unwrap();
        let pol = gather_downgrades(&prog, &parse_policy(POLICY).unwrap()).unwrap();
        let cfg = OracleConfig {
            bits: 1,
            ..OracleConfig::default()
        };
        let v = check_where_security(&prog, &pol, &cfg).unwrap();
        let w = v.witness.unwrap();
        let j = replay_pair(&prog, &pol, &cfg, w.level, Property::WhereSecurity, &w.run1, &w.run2);
        assert_eq!(j, PairJudgement::Violation("l".into()));
    }

    #[test]
    fn longer_input_prefix_exposes_loop_leaks() {
        // one static input hides the second iteration, where run 2 blocks on empty input
        let prog = parse_program("while l do input(l, inH); output(l, out0) od").unwrap();
        let pol = parse_policy(POLICY).unwrap();
        let mut cfg = OracleConfig {
            bits: 1,
            capacity: 3,
            ..OracleConfig::default()
        };
        assert_eq!(check_where_security(&prog, &pol, &cfg).unwrap().status, Status::Secure);
        cfg.input_prefix = Some(2);
        assert_eq!(
            check_where_security(&prog, &pol, &cfg).unwrap().status,
            Status::Insecure
        );
    }
}
