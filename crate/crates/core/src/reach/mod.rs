//! Forward reachability over composed models.
//!
//! [`post_star`] saturates a P-automaton whose transitions carry relations between the
//! valuation at their source state and the valuation at their target state. The
//! automaton has one control state, one auxiliary state per pushed symbol and a final
//! state without valuation.

pub mod explicit;
pub mod witness;

use std::collections::{BTreeMap, VecDeque};

use crate::compose::ComposedModel;
use crate::spds::bdd::{Bdd, Manager};
use crate::spds::symbolic::{Encoder, Slot};
use crate::spds::{Spds, Symbol};

/// Environment variable capping the number of diagram nodes.
pub const BUDGET_VAR: &str = "WHERECHECK_BUDGET";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReachConfig {
    pub node_limit: Option<usize>,
}

impl ReachConfig {
    /// Reads the node limit from `WHERECHECK_BUDGET`; unparsable values are ignored.
    pub fn from_env() -> ReachConfig {
        ReachConfig {
            node_limit: std::env::var(BUDGET_VAR).ok().and_then(|s| s.trim().parse().ok()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AState {
    Control,
    /// Entered by pushing this symbol.
    Mid(Symbol),
    Final,
}

type Key = (AState, Option<Symbol>, AState);

/// Saturated automaton. Labels are relations over (source valuation in the current slot,
/// target valuation in the entry slot); transitions into the final state constrain only
/// the source.
pub struct PAutomaton {
    pub manager: Manager,
    pub encoder: Encoder,
    pub transitions: BTreeMap<Key, Bdd>,
    pub start: Symbol,
    /// Worklist items processed.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    Complete,
    /// The node limit was hit; the automaton under-approximates.
    Exhausted,
}

struct Saturator<'a> {
    spds: &'a Spds,
    m: Manager,
    enc: Encoder,
    rules: Vec<Bdd>,
    by_lhs: Vec<Vec<usize>>,
    trans: BTreeMap<Key, Bdd>,
    /// Transitions leaving each auxiliary state.
    from_mid: BTreeMap<Symbol, Vec<(Symbol, AState)>>,
    work: VecDeque<(Key, Bdd)>,
    cube_a: Bdd,
    cube_b: Bdd,
    cube_c: Bdd,
    next_to_current: Vec<u32>,
    entry_to_next: Vec<u32>,
    current_to_next: Vec<u32>,
    diag: Bdd,
}

impl Saturator<'_> {
    fn add(&mut self, key: Key, rel: Bdd) {
        if rel.is_false() {
            return;
        }
        let old = self.trans.get(&key).copied().unwrap_or(Bdd::FALSE);
        let delta = self.m.diff(rel, old);
        if delta.is_false() {
            return;
        }
        let new = self.m.or(old, rel);
        if old.is_false() {
            if let AState::Mid(s) = key.0 {
                self.from_mid
                    .entry(s)
                    .or_default()
                    .push((key.1.expect("labelled"), key.2));
            }
        }
        self.trans.insert(key, new);
        self.work.push_back((key, delta));
    }

    /// `∃B. t(B, A) ∧ r(B, C)` with C renamed to B.
    fn image(&mut self, t: Bdd, r: Bdd) -> Bdd {
        let x = self.m.and_exists(t, r, self.cube_b);
        self.m.rename(x, &self.next_to_current)
    }

    /// `∃C. e(B, C) ∧ x(C, A)` for an ε-transition `e` into a state left by `x`.
    fn join(&mut self, e: Bdd, x: Bdd) -> Bdd {
        let e = self.m.rename(e, &self.entry_to_next);
        let x = self.m.rename(x, &self.current_to_next);
        self.m.and_exists(e, x, self.cube_c)
    }

    fn process(&mut self, key: Key, delta: Bdd) {
        let (src, label, dst) = key;
        match (src, label) {
            (AState::Control, Some(gamma)) => {
                let spds = self.spds;
                for &i in &self.by_lhs[gamma.0 as usize].clone() {
                    let rule = &spds.rules[i];
                    let img = self.image(delta, self.rules[i]);
                    match rule.rhs[..] {
                        [] => self.add((AState::Control, None, dst), img),
                        [g1] => self.add((AState::Control, Some(g1), dst), img),
                        [g1, g2] => {
                            let mid = AState::Mid(g1);
                            self.add((mid, Some(g2), dst), img);
                            let a = self.m.exists(img, self.cube_a);
                            let d = self.m.and(a, self.diag);
                            self.add((AState::Control, Some(g1), mid), d);
                        }
                        _ => unreachable!("rule right-hand sides hold at most two symbols"),
                    }
                }
            }
            (AState::Control, None) => {
                let AState::Mid(s) = dst else { return };
                for (g2, to) in self.from_mid.get(&s).cloned().unwrap_or_default() {
                    let x = self.trans[&(dst, Some(g2), to)];
                    let r = self.join(delta, x);
                    self.add((AState::Control, Some(g2), to), r);
                }
            }
            (AState::Mid(_), Some(g2)) => {
                if let Some(&e) = self.trans.get(&(AState::Control, None, src)) {
                    let r = self.join(e, delta);
                    self.add((AState::Control, Some(g2), dst), r);
                }
            }
            _ => {}
        }
    }
}

/// Saturates the automaton of configurations reachable from the model's initial ones.
pub fn post_star(spds: &Spds, cfg: &ReachConfig) -> (PAutomaton, Saturation) {
    let mut m = Manager::with_limit(cfg.node_limit);
    let enc = Encoder::new(&spds.globals);
    let rules: Vec<Bdd> = spds.rules.iter().map(|r| enc.relation(&mut m, &r.relation)).collect();
    let cube_a = enc.slot_cube(&mut m, Slot::Entry);
    let cube_b = enc.slot_cube(&mut m, Slot::Current);
    let cube_c = enc.slot_cube(&mut m, Slot::Next);
    let diag = enc.identity(&mut m, Slot::Current, Slot::Entry);
    let init = enc.predicates(&mut m, &spds.init, Slot::Current);
    let mut s = Saturator {
        spds,
        m,
        rules,
        by_lhs: spds.rules_by_lhs(),
        trans: BTreeMap::new(),
        from_mid: BTreeMap::new(),
        work: VecDeque::new(),
        cube_a,
        cube_b,
        cube_c,
        next_to_current: enc.slot_map(&[(Slot::Next, Slot::Current)]),
        entry_to_next: enc.slot_map(&[(Slot::Entry, Slot::Next)]),
        current_to_next: enc.slot_map(&[(Slot::Current, Slot::Next)]),
        enc,
        diag,
    };
    s.add((AState::Control, Some(spds.start), AState::Final), init);
    let mut steps = 0;
    while let Some((key, delta)) = s.work.pop_front() {
        steps += 1;
        s.process(key, delta);
        if s.m.exhausted() {
            break;
        }
    }
    let status = if s.m.exhausted() {
        Saturation::Exhausted
    } else {
        Saturation::Complete
    };
    (
        PAutomaton {
            manager: s.m,
            encoder: s.enc,
            transitions: s.trans,
            start: spds.start,
            steps,
        },
        status,
    )
}

impl PAutomaton {
    /// Whether some reachable configuration has `gamma` on top of the stack.
    pub fn top_reachable(&self, gamma: Symbol) -> bool {
        self.transitions
            .iter()
            .any(|((src, label, _), r)| *src == AState::Control && *label == Some(gamma) && !r.is_false())
    }

    /// Whether the configuration (valuation `v`, stack `word` top first) is accepted.
    pub fn accepts(&mut self, v: &[u64], word: &[Symbol]) -> bool {
        let enc = &self.encoder;
        let m = &mut self.manager;
        let cube_b = enc.slot_cube(m, Slot::Current);
        let to_current = enc.slot_map(&[(Slot::Entry, Slot::Current)]);
        let mut states: Vec<(AState, Bdd)> = vec![(AState::Control, enc.valuation(m, v, Slot::Current))];
        for ((src, label, dst), r) in &self.transitions {
            if *src == AState::Control && label.is_none() {
                let x = m.and_exists(states[0].1, *r, cube_b);
                let x = m.rename(x, &to_current);
                states.push((*dst, x));
            }
        }
        for &gamma in word {
            let mut next: BTreeMap<AState, Bdd> = BTreeMap::new();
            for &(st, set) in &states {
                for ((src, label, dst), r) in &self.transitions {
                    if *src != st || *label != Some(gamma) {
                        continue;
                    }
                    let x = m.and_exists(set, *r, cube_b);
                    let x = m.rename(x, &to_current);
                    if !x.is_false() {
                        let e = next.entry(*dst).or_insert(Bdd::FALSE);
                        *e = m.or(*e, x);
                    }
                }
            }
            states = next.into_iter().collect();
        }
        states.iter().any(|(s, set)| *s == AState::Final && !set.is_false())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reachability {
    Reachable,
    Unreachable,
    /// Resources ran out before a verdict.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachResult {
    pub verdict: Reachability,
    pub steps: usize,
    pub nodes: usize,
}

/// Runs post* on the composed model and looks for `error` on top of the stack.
pub fn is_error_reachable(model: &ComposedModel, cfg: &ReachConfig) -> ReachResult {
    let (a, status) = post_star(&model.spds, cfg);
    let verdict = if a.top_reachable(model.error) {
        Reachability::Reachable
    } else if status == Saturation::Exhausted {
        Reachability::Unknown
    } else {
        Reachability::Unreachable
    };
    ReachResult {
        verdict,
        steps: a.steps,
        nodes: a.manager.node_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::BinOp;
    use crate::spds::{rt, Globals, Origin, Relation, RuleKind, Run, Term};

    fn origin() -> Origin {
        Origin {
            site: None,
            kind: RuleKind::Skip,
            run: Run::First,
        }
    }

    fn counter_model() -> Spds {
        let mut g = Globals::new();
        let x = g.add("x", 2);
        let mut s = Spds::new(g);
        let a = s.symbol("a");
        let f = s.symbol("f");
        let b = s.symbol("b");
        let inc = Relation::new().update(x, Term::bin(BinOp::Add, Term::var(x), Term::constant(1, 2)));
        s.add_rule(a, vec![f, b], inc.clone(), origin());
        s.add_rule(f, vec![], inc, origin());
        s.add_rule(b, vec![a], rt(&[x]), origin());
        s.start = a;
        s.init.push(Term::eq(Term::var(x), Term::constant(0, 2)));
        s
    }

    #[test]
    fn no_rules_accepts_only_initial() {
        let mut g = Globals::new();
        g.add("x", 1);
        let mut s = Spds::new(g);
        let a = s.symbol("a");
        s.start = a;
        s.init
            .push(Term::eq(Term::var(crate::spds::GlobalId(0)), Term::constant(1, 1)));
        let (mut p, st) = post_star(&s, &ReachConfig::default());
        assert_eq!(st, Saturation::Complete);
        assert!(p.accepts(&[1], &[a]));
        assert!(!p.accepts(&[0], &[a]));
        assert!(!p.accepts(&[1], &[]));
    }

    #[test]
    fn self_loop_saturates() {
        let mut g = Globals::new();
        let x = g.add("x", 1);
        let mut s = Spds::new(g);
        let a = s.symbol("a");
        s.add_rule(a, vec![a], rt(&[x]), origin());
        s.start = a;
        let (mut p, _) = post_star(&s, &ReachConfig::default());
        assert_eq!(p.steps, 1);
        assert!(p.accepts(&[0], &[a]) && p.accepts(&[1], &[a]));
    }

    #[test]
    fn push_pop_matches_explicit_search() {
        let s = counter_model();
        let (mut p, _) = post_star(&s, &ReachConfig::default());
        let reach = explicit::reachable_states(&s, 10_000).unwrap();
        let syms: Vec<Symbol> = (0..s.symbols.len() as u32).map(Symbol).collect();
        let mut words: Vec<Vec<Symbol>> = vec![vec![]];
        for &a in &syms {
            words.push(vec![a]);
            for &b in &syms {
                words.push(vec![a, b]);
                for &c in &syms {
                    words.push(vec![a, b, c]);
                }
            }
        }
        for w in &words {
            for x in 0..4u64 {
                let expect = reach.contains(&(vec![x], w.clone()));
                assert_eq!(p.accepts(&[x], w), expect, "x={x} word={w:?}");
            }
        }
    }

    #[test]
    fn node_limit_reports_exhaustion() {
        let s = counter_model();
        let (_, st) = post_star(&s, &ReachConfig { node_limit: Some(4) });
        assert_eq!(st, Saturation::Exhausted);
    }
}
