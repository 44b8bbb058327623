//! Counterexample extraction and replay.
//!
//! A breadth-first search over stack words with symbolic valuation sets finds the
//! shortest rule sequence reaching `error`; backtracking picks concrete predecessors,
//! preferring rules declared earlier. The path is then decoded into two interpreter runs.

use std::collections::BTreeMap;
use std::fmt;

use crate::compose::ComposedModel;
use crate::frontend::{Policy, Program};
use crate::modelgen::{ModelSkeleton, FINAL_CHANNEL};
use crate::oracle::{replay_pair, InitialState, OracleConfig, PairJudgement, Property};
use crate::spds::bdd::{Bdd, Manager};
use crate::spds::symbolic::{Encoder, Slot};
use crate::spds::{RuleKind, Run, Symbol};

use super::ReachConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    /// Rule that produced this configuration; `None` for the initial one.
    pub rule: Option<usize>,
    pub word: Vec<Symbol>,
    pub valuation: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub path: Vec<PathStep>,
    pub run1: InitialState,
    pub run2: InitialState,
    /// Observable the runs disagree on, e.g. `l` or `out0[1]`.
    pub observable: String,
    pub replay: PairJudgement,
}

impl Witness {
    pub fn replayed(&self) -> bool {
        matches!(self.replay, PairJudgement::Violation(_))
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run 1: {}", self.run1)?;
        writeln!(f, "run 2: {}", self.run2)?;
        writeln!(f, "mismatch: {}", self.observable)?;
        write!(
            f,
            "replay: {}",
            match &self.replay {
                PairJudgement::Violation(o) => format!("violation on {o}"),
                PairJudgement::Compliant => "compliant".to_string(),
                PairJudgement::Vacuous => "premise fails".to_string(),
                PairJudgement::Unknown => "out of fuel".to_string(),
            }
        )
    }
}

type Layer = BTreeMap<Vec<Symbol>, Bdd>;

/// Shortest path from an initial configuration to one with `target` on top.
pub fn shortest_path(model: &ComposedModel, target: Symbol, cfg: &ReachConfig) -> Option<Vec<PathStep>> {
    let spds = &model.spds;
    let mut m = Manager::with_limit(cfg.node_limit);
    let enc = Encoder::new(&spds.globals);
    let rels: Vec<Bdd> = spds.rules.iter().map(|r| enc.relation(&mut m, &r.relation)).collect();
    let cube_b = enc.slot_cube(&mut m, Slot::Current);
    let to_current = enc.slot_map(&[(Slot::Next, Slot::Current)]);
    let by_lhs = spds.rules_by_lhs();

    let init = enc.predicates(&mut m, &spds.init, Slot::Current);
    let mut visited: Layer = BTreeMap::from([(vec![spds.start], init)]);
    let mut layers: Vec<Layer> = vec![visited.clone()];
    let hit = |layer: &Layer| {
        layer
            .iter()
            .find(|(w, s)| w.first() == Some(&target) && !s.is_false())
            .map(|(w, _)| w.clone())
    };
    let mut found = hit(&layers[0]);
    while found.is_none() {
        let mut next: Layer = BTreeMap::new();
        for (word, &set) in layers.last().expect("nonempty") {
            let Some((&top, rest)) = word.split_first() else {
                continue;
            };
            for &i in &by_lhs[top.0 as usize] {
                let img = m.and_exists(set, rels[i], cube_b);
                let img = m.rename(img, &to_current);
                if img.is_false() {
                    continue;
                }
                let mut w = spds.rules[i].rhs.clone();
                w.extend_from_slice(rest);
                let seen = visited.get(&w).copied().unwrap_or(Bdd::FALSE);
                let fresh = m.diff(img, seen);
                if fresh.is_false() {
                    continue;
                }
                let e = next.entry(w).or_insert(Bdd::FALSE);
                *e = m.or(*e, fresh);
            }
        }
        if m.exhausted() || next.is_empty() {
            return None;
        }
        for (w, &s) in &next {
            let e = visited.entry(w.clone()).or_insert(Bdd::FALSE);
            *e = m.or(*e, s);
        }
        found = hit(&next);
        layers.push(next);
    }

    let word = found.expect("loop exits on a hit");
    let last = layers.last().expect("nonempty")[&word];
    let mut valuation = enc.pick(&m, last, Slot::Current)?;
    let mut current = word;
    let mut path = Vec::with_capacity(layers.len());
    for k in (1..layers.len()).rev() {
        let post = enc.valuation(&mut m, &valuation, Slot::Next);
        let mut step = None;
        for (i, rule) in spds.rules.iter().enumerate() {
            if !current.starts_with(&rule.rhs) {
                continue;
            }
            let mut pred = vec![rule.lhs];
            pred.extend_from_slice(&current[rule.rhs.len()..]);
            let Some(&set) = layers[k - 1].get(&pred) else { continue };
            let pre = m.and(set, rels[i]);
            let pre = m.and(pre, post);
            if let Some(v) = enc.pick(&m, pre, Slot::Current) {
                step = Some((i, pred, v));
                break;
            }
        }
        let (i, pred, v) = step?;
        path.push(PathStep {
            rule: Some(i),
            word: std::mem::replace(&mut current, pred),
            valuation: std::mem::replace(&mut valuation, v),
        });
    }
    path.push(PathStep {
        rule: None,
        word: current,
        valuation,
    });
    path.reverse();
    Some(path)
}

/// Decodes a path to `error` into two initial states and the mismatching observable.
pub fn decode(sk: &ModelSkeleton, model: &ComposedModel, path: &[PathStep]) -> (InitialState, InitialState, String) {
    let g = &sk.spds.globals;
    let v0 = &path[0].valuation;
    let after_init = path.get(1).map_or(v0, |s| &s.valuation);
    let mut run1 = InitialState {
        store: BTreeMap::new(),
        inputs: BTreeMap::new(),
    };
    let mut run2 = run1.clone();
    for (name, id) in &sk.vars {
        run1.store.insert(name.clone(), v0[model.first[id.0].0]);
        run2.store.insert(name.clone(), after_init[model.second[id.0].0]);
    }
    for ch in &sk.inputs {
        let content: Vec<u64> = g.cells(ch.cells).iter().map(|c| v0[model.first[c.0].0]).collect();
        run1.inputs.insert(ch.name.clone(), content.clone());
        run2.inputs.insert(ch.name.clone(), content);
    }
    let rules = &model.spds.rules;
    let mut observable = String::new();
    for (k, step) in path.iter().enumerate().skip(1) {
        let rule = &rules[step.rule.expect("non-initial steps carry a rule")];
        let pre = &path[k - 1].valuation;
        match &rule.origin.kind {
            RuleKind::InputHigh { channel, var } => {
                let id = g.lookup(var).expect("input target is declared");
                let (run, map) = match rule.origin.run {
                    Run::Second => (&mut run2, &model.second),
                    _ => (&mut run1, &model.first),
                };
                run.inputs
                    .entry(channel.clone())
                    .or_default()
                    .push(step.valuation[map[id.0].0]);
            }
            RuleKind::OutputMismatch { channel } if observable.is_empty() => {
                let o = sk.output(channel).expect("mismatch on a modelled channel");
                let q = pre[model.first[o.counter.0].0] as usize;
                observable = observable_name(sk, channel, q);
            }
            RuleKind::CheckFail { channel } if observable.is_empty() => {
                let o = sk.output(channel).expect("check on a modelled channel");
                let q1 = pre[model.first[o.counter.0].0] as usize;
                let q2 = pre[model.second[o.counter.0].0] as usize;
                let cells = g.cells(o.cells);
                let k = (0..q1.min(q2).min(cells.len()))
                    .find(|&k| pre[model.first[cells[k].0].0] != pre[model.second[cells[k].0].0])
                    .unwrap_or(q1.min(q2));
                observable = observable_name(sk, channel, k);
            }
            _ => {}
        }
    }
    (run1, run2, observable)
}

fn observable_name(sk: &ModelSkeleton, channel: &str, index: usize) -> String {
    if channel == FINAL_CHANNEL {
        sk.low_vars
            .get(index)
            .cloned()
            .unwrap_or_else(|| format!("{channel}[{index}]"))
    } else {
        format!("{channel}[{index}]")
    }
}

/// Extracts, decodes and replays a counterexample; `None` if `error` is unreachable or
/// the search runs out of nodes.
pub fn extract_witness(
    program: &Program,
    policy: &Policy,
    sk: &ModelSkeleton,
    model: &ComposedModel,
    cfg: &ReachConfig,
    fuel: usize,
) -> Option<Witness> {
    let path = shortest_path(model, model.error, cfg)?;
    let (run1, run2, observable) = decode(sk, model, &path);
    // high outputs are not counted by the model, so give the interpreter room for them
    let ocfg = OracleConfig {
        bits: sk.bits,
        capacity: sk.capacity.max(path.len()),
        fuel,
        ..OracleConfig::default()
    };
    let replay = replay_pair(program, policy, &ocfg, sk.level, Property::WhereSecurity, &run1, &run2);
    Some(Witness {
        path,
        run1,
        run2,
        observable,
        replay,
    })
}
