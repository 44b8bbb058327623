//! Direct evaluation of relations on concrete valuations.

use super::{Atom, Globals, Relation};
use crate::frontend::ast::width_mask;

/// Whether `(v, w)` belongs to the relation.
pub fn holds(g: &Globals, r: &Relation, v: &[u64], w: &[u64]) -> bool {
    r.atoms.iter().all(|a| match a {
        Atom::Guard(t) => t.eval(g, v) != 0,
        Atom::Update(x, t) => w[x.0] == t.eval(g, v) & width_mask(g.width(*x)),
        Atom::Store { array, index, value } => {
            let i = index.eval(g, v);
            let val = value.eval(g, v);
            g.cells(*array).iter().enumerate().all(|(k, c)| {
                let expect = if i == k as u64 {
                    val & width_mask(g.width(*c))
                } else {
                    v[c.0]
                };
                w[c.0] == expect
            })
        }
        Atom::Retain(x) => w[x.0] == v[x.0],
    })
}

/// Whether the valuation satisfies every guard of the relation (its domain, up to conflicts
/// between writes).
pub fn enabled(g: &Globals, r: &Relation, v: &[u64]) -> bool {
    r.guards().all(|t| t.eval(g, v) != 0)
}

/// All successors of `v`, in increasing lexicographic order of the free globals.
pub fn post(g: &Globals, r: &Relation, v: &[u64]) -> Vec<Vec<u64>> {
    if !enabled(g, r, v) {
        return Vec::new();
    }
    // First candidate value for each constrained global; globals nothing constrains are free.
    let mut fixed: Vec<Option<u64>> = vec![None; g.len()];
    for a in &r.atoms {
        match a {
            Atom::Update(x, t) => {
                fixed[x.0].get_or_insert(t.eval(g, v) & width_mask(g.width(*x)));
            }
            Atom::Retain(x) => {
                fixed[x.0].get_or_insert(v[x.0]);
            }
            Atom::Store { array, index, value } => {
                let i = index.eval(g, v);
                let val = value.eval(g, v);
                for (k, c) in g.cells(*array).iter().enumerate() {
                    let x = if i == k as u64 {
                        val & width_mask(g.width(*c))
                    } else {
                        v[c.0]
                    };
                    fixed[c.0].get_or_insert(x);
                }
            }
            Atom::Guard(_) => {}
        }
    }
    let free: Vec<usize> = (0..g.len()).filter(|&i| fixed[i].is_none()).collect();
    let base: Vec<u64> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
    let mut out = Vec::new();
    let mut cur = base;
    enumerate_free(g, &free, 0, &mut cur, &mut |w| {
        if holds(g, r, v, w) {
            out.push(w.to_vec());
        }
    });
    out
}

fn enumerate_free(g: &Globals, free: &[usize], i: usize, cur: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
    if i == free.len() {
        f(cur);
        return;
    }
    let idx = free[i];
    for val in 0..=width_mask(g.decls[idx].width) {
        cur[idx] = val;
        enumerate_free(g, free, i + 1, cur, f);
    }
    cur[idx] = 0;
}

/// Every valuation of `g`, in lexicographic order.
pub fn all_valuations(g: &Globals) -> Vec<Vec<u64>> {
    let free: Vec<usize> = (0..g.len()).collect();
    let mut out = Vec::new();
    let mut cur = vec![0; g.len()];
    enumerate_free(g, &free, 0, &mut cur, &mut |w| out.push(w.to_vec()));
    out
}
