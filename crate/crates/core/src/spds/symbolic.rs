//! Compilation of terms and relations to decision diagrams.
//!
//! Every global bit gets three adjacent diagram variables, one per [`Slot`]; bits of a
//! global are ordered most significant first.

use super::bdd::{Bdd, Manager};
use super::{Atom, GlobalId, Globals, Relation, Term};
use crate::frontend::BinOp;

/// Which copy of the globals a diagram variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Valuation at the entry of the enclosing stack frame.
    Entry = 0,
    Current = 1,
    Next = 2,
}

const SLOTS: u32 = 3;

/// Bit vector, least significant bit first.
pub type BitVec = Vec<Bdd>;

#[derive(Debug, Clone)]
pub struct Encoder {
    pub globals: Globals,
    offsets: Vec<u32>,
    /// Global owning each bit position.
    owner: Vec<u32>,
    total_bits: u32,
}

impl Encoder {
    pub fn new(globals: &Globals) -> Encoder {
        let mut offsets = Vec::with_capacity(globals.len());
        let mut owner = Vec::new();
        let mut acc = 0;
        for (i, d) in globals.decls.iter().enumerate() {
            offsets.push(acc);
            acc += d.width;
            owner.extend(std::iter::repeat_n(i as u32, d.width as usize));
        }
        Encoder {
            globals: globals.clone(),
            offsets,
            owner,
            total_bits: acc,
        }
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn var_count(&self) -> u32 {
        self.total_bits * SLOTS
    }

    /// Diagram variable of bit `bit` (0 = least significant) of `g` in `slot`.
    pub fn bdd_var(&self, g: GlobalId, bit: u32, slot: Slot) -> u32 {
        let w = self.globals.width(g);
        (self.offsets[g.0] + (w - 1 - bit)) * SLOTS + slot as u32
    }

    pub fn vector(&self, m: &mut Manager, g: GlobalId, slot: Slot) -> BitVec {
        (0..self.globals.width(g))
            .map(|b| m.var(self.bdd_var(g, b, slot)))
            .collect()
    }

    pub fn slot_vars(&self, slot: Slot) -> Vec<u32> {
        (0..self.total_bits).map(|i| i * SLOTS + slot as u32).collect()
    }

    pub fn slot_cube(&self, m: &mut Manager, slot: Slot) -> Bdd {
        m.cube(&self.slot_vars(slot))
    }

    /// Variable map for [`Manager::rename`] moving each `(from, to)` slot pair.
    pub fn slot_map(&self, moves: &[(Slot, Slot)]) -> Vec<u32> {
        let mut map = vec![u32::MAX; self.var_count() as usize];
        for &(from, to) in moves {
            for i in 0..self.total_bits {
                map[(i * SLOTS + from as u32) as usize] = i * SLOTS + to as u32;
            }
        }
        map
    }

    /// `slot_a = slot_b` on every global.
    pub fn identity(&self, m: &mut Manager, a: Slot, b: Slot) -> Bdd {
        let mut r = Bdd::TRUE;
        for i in (0..self.total_bits).rev() {
            let x = m.var(i * SLOTS + a as u32);
            let y = m.var(i * SLOTS + b as u32);
            let e = m.iff(x, y);
            r = m.and(e, r);
        }
        r
    }

    /// The single valuation `v` in `slot`.
    pub fn valuation(&self, m: &mut Manager, v: &[u64], slot: Slot) -> Bdd {
        let mut r = Bdd::TRUE;
        for g in self.globals.ids().rev() {
            for b in 0..self.globals.width(g) {
                let var = self.bdd_var(g, b, slot);
                let lit = if v[g.0] >> b & 1 == 1 { m.var(var) } else { m.nvar(var) };
                r = m.and(lit, r);
            }
        }
        r
    }

    /// Reads the `slot` valuation out of a satisfying assignment given as its 1-variables.
    pub fn decode(&self, ones: &[u32], slot: Slot) -> Vec<u64> {
        let mut v = vec![0u64; self.globals.len()];
        for g in self.globals.ids() {
            for b in 0..self.globals.width(g) {
                if ones.binary_search(&self.bdd_var(g, b, slot)).is_ok() {
                    v[g.0] |= 1 << b;
                }
            }
        }
        v
    }

    /// Least valuation (in diagram order) in the `slot` projection of `f`.
    pub fn pick(&self, m: &Manager, f: Bdd, slot: Slot) -> Option<Vec<u64>> {
        let mut ones = m.pick_min(f)?;
        ones.sort_unstable();
        Some(self.decode(&ones, slot))
    }

    pub fn contains(&self, m: &Manager, f: Bdd, assignments: &[(Slot, &[u64])]) -> bool {
        m.eval(f, |var| {
            let slot = var % SLOTS;
            let bit_index = var / SLOTS;
            let Some((_, v)) = assignments.iter().find(|(s, _)| *s as u32 == slot) else {
                return false;
            };
            let g = self.owner[bit_index as usize] as usize;
            let w = self.globals.width(GlobalId(g));
            let bit = w - 1 - (bit_index - self.offsets[g]);
            v[g] >> bit & 1 == 1
        })
    }

    pub fn term(&self, m: &mut Manager, t: &Term, slot: Slot) -> BitVec {
        match t {
            Term::Const { value, width } => (0..*width).map(|b| m.constant(value >> b & 1 == 1)).collect(),
            Term::Var(g) => self.vector(m, *g, slot),
            Term::Bin(op, a, b) => {
                let a = self.term(m, a, slot);
                let b = self.term(m, b, slot);
                let w = a.len().max(b.len());
                let (a, b) = (extend(&a, w), extend(&b, w));
                match op {
                    BinOp::Add => add(m, &a, &b, Bdd::FALSE),
                    BinOp::Sub => {
                        let nb: BitVec = b.iter().map(|&x| m.not(x)).collect();
                        add(m, &a, &nb, Bdd::TRUE)
                    }
                    BinOp::Mul => mul(m, &a, &b),
                    BinOp::And => a.iter().zip(&b).map(|(&x, &y)| m.and(x, y)).collect(),
                    BinOp::Or => a.iter().zip(&b).map(|(&x, &y)| m.or(x, y)).collect(),
                    BinOp::Eq => vec![equal(m, &a, &b)],
                    BinOp::Ne => {
                        let e = equal(m, &a, &b);
                        vec![m.not(e)]
                    }
                    BinOp::Lt => vec![less(m, &a, &b)],
                    BinOp::Le => {
                        let gt = less(m, &b, &a);
                        vec![m.not(gt)]
                    }
                }
            }
            Term::Select(arr, idx) => {
                let idx = self.term(m, idx, slot);
                let w = t.width(&self.globals) as usize;
                let mut out = vec![Bdd::FALSE; w];
                for (k, &cell) in self.globals.cells(*arr).to_vec().iter().enumerate() {
                    let hit = equals_const(m, &idx, k as u64);
                    if hit.is_false() {
                        continue;
                    }
                    let bits = extend(&self.vector(m, cell, slot), w);
                    for (o, b) in out.iter_mut().zip(bits) {
                        let sel = m.and(hit, b);
                        *o = m.or(*o, sel);
                    }
                }
                out
            }
        }
    }

    /// `t ≠ 0` in `slot`.
    pub fn predicate(&self, m: &mut Manager, t: &Term, slot: Slot) -> Bdd {
        let bits = self.term(m, t, slot);
        bits.into_iter().fold(Bdd::FALSE, |acc, b| m.or(acc, b))
    }

    /// Conjunction of predicates in `slot`.
    pub fn predicates(&self, m: &mut Manager, ts: &[Term], slot: Slot) -> Bdd {
        let mut r = Bdd::TRUE;
        for t in ts {
            let p = self.predicate(m, t, slot);
            r = m.and(r, p);
        }
        r
    }

    /// The relation over (`Current`, `Next`).
    pub fn relation(&self, m: &mut Manager, r: &Relation) -> Bdd {
        let mut acc = Bdd::TRUE;
        // guards first: they usually prune the most
        let mut atoms: Vec<&Atom> = r.atoms.iter().filter(|a| matches!(a, Atom::Guard(_))).collect();
        atoms.extend(r.atoms.iter().filter(|a| !matches!(a, Atom::Guard(_))));
        for a in atoms {
            let c = match a {
                Atom::Guard(t) => self.predicate(m, t, Slot::Current),
                Atom::Update(g, t) => {
                    let w = self.globals.width(*g) as usize;
                    let val = extend(&self.term(m, t, Slot::Current), w);
                    let next = self.vector(m, *g, Slot::Next);
                    equal(m, &next, &val)
                }
                Atom::Retain(g) => {
                    let cur = self.vector(m, *g, Slot::Current);
                    let next = self.vector(m, *g, Slot::Next);
                    equal(m, &next, &cur)
                }
                Atom::Store { array, index, value } => {
                    let idx = self.term(m, index, Slot::Current);
                    let val = self.term(m, value, Slot::Current);
                    let mut c = Bdd::TRUE;
                    for (k, &cell) in self.globals.cells(*array).to_vec().iter().enumerate() {
                        let w = self.globals.width(cell) as usize;
                        let hit = equals_const(m, &idx, k as u64);
                        let cur = self.vector(m, cell, Slot::Current);
                        let next = self.vector(m, cell, Slot::Next);
                        let val = extend(&val, w);
                        let chosen: BitVec = val.iter().zip(&cur).map(|(&v, &o)| m.ite(hit, v, o)).collect();
                        let e = equal(m, &next, &chosen);
                        c = m.and(c, e);
                    }
                    c
                }
            };
            acc = m.and(acc, c);
            if acc.is_false() {
                break;
            }
        }
        acc
    }
}

fn extend(v: &[Bdd], w: usize) -> BitVec {
    let mut out: BitVec = v.iter().take(w).copied().collect();
    out.resize(w, Bdd::FALSE);
    out
}

fn add(m: &mut Manager, a: &[Bdd], b: &[Bdd], carry_in: Bdd) -> BitVec {
    let mut carry = carry_in;
    let mut out = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let xy = m.xor(x, y);
        out.push(m.xor(xy, carry));
        let both = m.and(x, y);
        let prop = m.and(carry, xy);
        carry = m.or(both, prop);
    }
    out
}

fn mul(m: &mut Manager, a: &[Bdd], b: &[Bdd]) -> BitVec {
    let w = a.len();
    let mut acc = vec![Bdd::FALSE; w];
    for (i, &bi) in b.iter().enumerate() {
        let mut partial = vec![Bdd::FALSE; w];
        for j in i..w {
            partial[j] = m.and(a[j - i], bi);
        }
        acc = add(m, &acc, &partial, Bdd::FALSE);
    }
    acc
}

fn equal(m: &mut Manager, a: &[Bdd], b: &[Bdd]) -> Bdd {
    let mut r = Bdd::TRUE;
    for (&x, &y) in a.iter().zip(b).rev() {
        let e = m.iff(x, y);
        r = m.and(r, e);
        if r.is_false() {
            break;
        }
    }
    r
}

fn equals_const(m: &mut Manager, a: &[Bdd], k: u64) -> Bdd {
    if a.len() < 64 && k >> a.len() != 0 {
        return Bdd::FALSE;
    }
    let mut r = Bdd::TRUE;
    for (i, &x) in a.iter().enumerate() {
        let lit = if k >> i & 1 == 1 { x } else { m.not(x) };
        r = m.and(r, lit);
    }
    r
}

/// Unsigned `a < b`.
fn less(m: &mut Manager, a: &[Bdd], b: &[Bdd]) -> Bdd {
    let mut lt = Bdd::FALSE;
    for (&x, &y) in a.iter().zip(b) {
        let nx = m.not(x);
        let here = m.and(nx, y);
        let same = m.iff(x, y);
        let keep = m.and(same, lt);
        lt = m.or(here, keep);
    }
    lt
}
