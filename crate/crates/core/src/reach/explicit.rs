//! Explicit-state breadth-first search, the reference backend for small models.

use std::collections::{BTreeSet, VecDeque};

use crate::compose::ComposedModel;
use crate::spds::{explicit, Spds, State};

/// Largest global bit-count the explicit backend accepts.
pub const MAX_EXPLICIT_BITS: u32 = 18;

/// Every reachable configuration, or `None` once more than `budget` are found.
pub fn reachable_states(spds: &Spds, budget: usize) -> Option<BTreeSet<State>> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    for v in initial_valuations(spds)? {
        let st = (v, vec![spds.start]);
        if seen.insert(st.clone()) {
            queue.push_back(st);
        }
    }
    let by_lhs = spds.rules_by_lhs();
    while let Some((v, word)) = queue.pop_front() {
        let Some((&top, rest)) = word.split_first() else {
            continue;
        };
        for &i in &by_lhs[top.0 as usize] {
            let r = &spds.rules[i];
            for w in explicit::post(&spds.globals, &r.relation, &v) {
                let mut stack = r.rhs.clone();
                stack.extend_from_slice(rest);
                let st = (w, stack);
                if !seen.contains(&st) {
                    if seen.len() >= budget {
                        return None;
                    }
                    seen.insert(st.clone());
                    queue.push_back(st);
                }
            }
        }
    }
    Some(seen)
}

fn initial_valuations(spds: &Spds) -> Option<Vec<Vec<u64>>> {
    if spds.globals.total_bits() > MAX_EXPLICIT_BITS {
        return None;
    }
    Some(
        explicit::all_valuations(&spds.globals)
            .into_iter()
            .filter(|v| spds.init.iter().all(|t| t.eval(&spds.globals, v) != 0))
            .collect(),
    )
}

/// Error reachability by explicit search; `None` when the model exceeds the budget.
pub fn error_reachable(model: &ComposedModel, budget: usize) -> Option<bool> {
    let states = reachable_states(&model.spds, budget)?;
    Some(states.iter().any(|(_, w)| w.first() == Some(&model.error)))
}
