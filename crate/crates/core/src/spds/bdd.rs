//! Reduced ordered binary decision diagrams.
//!
//! A single [`Manager`] owns every node; [`Bdd`] handles are plain indices and are only
//! meaningful together with the manager that created them. Variable `0` is the topmost.

use rustc_hash::FxHashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bdd(u32);

impl Bdd {
    pub const FALSE: Bdd = Bdd(0);
    pub const TRUE: Bdd = Bdd(1);

    pub fn is_false(self) -> bool {
        self == Bdd::FALSE
    }

    pub fn is_true(self) -> bool {
        self == Bdd::TRUE
    }

    pub fn is_const(self) -> bool {
        self.0 < 2
    }
}

const TERMINAL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    var: u32,
    lo: Bdd,
    hi: Bdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    And,
    Or,
    Xor,
    Not,
    Ite,
    Exists,
    AndExists,
}

/// Caches are dropped wholesale once they reach this many entries.
const CACHE_LIMIT: usize = 1 << 22;

pub struct Manager {
    nodes: Vec<Node>,
    unique: FxHashMap<Node, Bdd>,
    cache: FxHashMap<(Op, Bdd, Bdd, Bdd), Bdd>,
    limit: Option<usize>,
    exhausted: bool,
}

impl Default for Manager {
    fn default() -> Self {
        Manager::new()
    }
}

impl Manager {
    pub fn new() -> Manager {
        let terminal = |_| Node {
            var: TERMINAL,
            lo: Bdd::FALSE,
            hi: Bdd::FALSE,
        };
        Manager {
            nodes: (0..2).map(terminal).collect(),
            unique: FxHashMap::default(),
            cache: FxHashMap::default(),
            limit: None,
            exhausted: false,
        }
    }

    /// Caps the node table; once exceeded, [`Manager::exhausted`] reports true. Operations
    /// still complete so callers can stop at a convenient point.
    pub fn with_limit(limit: Option<usize>) -> Manager {
        let mut m = Manager::new();
        m.limit = limit;
        m
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn var_of(&self, f: Bdd) -> u32 {
        self.nodes[f.0 as usize].var
    }

    fn lo(&self, f: Bdd) -> Bdd {
        self.nodes[f.0 as usize].lo
    }

    fn hi(&self, f: Bdd) -> Bdd {
        self.nodes[f.0 as usize].hi
    }

    fn mk(&mut self, var: u32, lo: Bdd, hi: Bdd) -> Bdd {
        if lo == hi {
            return lo;
        }
        let node = Node { var, lo, hi };
        if let Some(&b) = self.unique.get(&node) {
            return b;
        }
        let b = Bdd(self.nodes.len() as u32);
        self.nodes.push(node);
        self.unique.insert(node, b);
        if self.limit.is_some_and(|l| self.nodes.len() > l) {
            self.exhausted = true;
        }
        b
    }

    fn cached(&self, key: (Op, Bdd, Bdd, Bdd)) -> Option<Bdd> {
        self.cache.get(&key).copied()
    }

    fn remember(&mut self, key: (Op, Bdd, Bdd, Bdd), r: Bdd) {
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, r);
    }

    pub fn constant(&self, b: bool) -> Bdd {
        if b {
            Bdd::TRUE
        } else {
            Bdd::FALSE
        }
    }

    pub fn var(&mut self, v: u32) -> Bdd {
        self.mk(v, Bdd::FALSE, Bdd::TRUE)
    }

    pub fn nvar(&mut self, v: u32) -> Bdd {
        self.mk(v, Bdd::TRUE, Bdd::FALSE)
    }

    fn top2(&self, f: Bdd, g: Bdd) -> u32 {
        self.var_of(f).min(self.var_of(g))
    }

    fn cofactors(&self, f: Bdd, v: u32) -> (Bdd, Bdd) {
        if self.var_of(f) == v {
            (self.lo(f), self.hi(f))
        } else {
            (f, f)
        }
    }

    pub fn not(&mut self, f: Bdd) -> Bdd {
        if f.is_const() {
            return self.constant(f.is_false());
        }
        let key = (Op::Not, f, Bdd::FALSE, Bdd::FALSE);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let (v, lo, hi) = (self.var_of(f), self.lo(f), self.hi(f));
        let (lo, hi) = (self.not(lo), self.not(hi));
        let r = self.mk(v, lo, hi);
        self.remember(key, r);
        r
    }

    pub fn and(&mut self, f: Bdd, g: Bdd) -> Bdd {
        if f.is_false() || g.is_false() {
            return Bdd::FALSE;
        }
        if f.is_true() || f == g {
            return g;
        }
        if g.is_true() {
            return f;
        }
        let (f, g) = if f < g { (f, g) } else { (g, f) };
        let key = (Op::And, f, g, Bdd::FALSE);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let v = self.top2(f, g);
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let lo = self.and(f0, g0);
        let hi = self.and(f1, g1);
        let r = self.mk(v, lo, hi);
        self.remember(key, r);
        r
    }

    pub fn or(&mut self, f: Bdd, g: Bdd) -> Bdd {
        if f.is_true() || g.is_true() {
            return Bdd::TRUE;
        }
        if f.is_false() || f == g {
            return g;
        }
        if g.is_false() {
            return f;
        }
        let (f, g) = if f < g { (f, g) } else { (g, f) };
        let key = (Op::Or, f, g, Bdd::FALSE);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let v = self.top2(f, g);
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let lo = self.or(f0, g0);
        let hi = self.or(f1, g1);
        let r = self.mk(v, lo, hi);
        self.remember(key, r);
        r
    }

    pub fn xor(&mut self, f: Bdd, g: Bdd) -> Bdd {
        if f == g {
            return Bdd::FALSE;
        }
        if f.is_false() {
            return g;
        }
        if g.is_false() {
            return f;
        }
        if f.is_true() {
            return self.not(g);
        }
        if g.is_true() {
            return self.not(f);
        }
        let (f, g) = if f < g { (f, g) } else { (g, f) };
        let key = (Op::Xor, f, g, Bdd::FALSE);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let v = self.top2(f, g);
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let lo = self.xor(f0, g0);
        let hi = self.xor(f1, g1);
        let r = self.mk(v, lo, hi);
        self.remember(key, r);
        r
    }

    pub fn iff(&mut self, f: Bdd, g: Bdd) -> Bdd {
        let x = self.xor(f, g);
        self.not(x)
    }

    pub fn implies(&mut self, f: Bdd, g: Bdd) -> Bdd {
        let nf = self.not(f);
        self.or(nf, g)
    }

    /// `f ∧ ¬g`.
    pub fn diff(&mut self, f: Bdd, g: Bdd) -> Bdd {
        let ng = self.not(g);
        self.and(f, ng)
    }

    pub fn ite(&mut self, f: Bdd, g: Bdd, h: Bdd) -> Bdd {
        if f.is_true() {
            return g;
        }
        if f.is_false() {
            return h;
        }
        if g == h {
            return g;
        }
        if g.is_true() && h.is_false() {
            return f;
        }
        if g.is_false() && h.is_true() {
            return self.not(f);
        }
        let key = (Op::Ite, f, g, h);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let v = self.var_of(f).min(self.var_of(g)).min(self.var_of(h));
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let (h0, h1) = self.cofactors(h, v);
        let lo = self.ite(f0, g0, h0);
        let hi = self.ite(f1, g1, h1);
        let r = self.mk(v, lo, hi);
        self.remember(key, r);
        r
    }

    /// Conjunction of the given variables, used as a quantification set.
    pub fn cube(&mut self, vars: &[u32]) -> Bdd {
        let mut sorted = vars.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut r = Bdd::TRUE;
        for &v in sorted.iter().rev() {
            r = self.mk(v, Bdd::FALSE, r);
        }
        r
    }

    /// Skips cube variables above `v`.
    fn cube_from(&self, mut cube: Bdd, v: u32) -> Bdd {
        while !cube.is_const() && self.var_of(cube) < v {
            cube = self.hi(cube);
        }
        cube
    }

    pub fn exists(&mut self, f: Bdd, cube: Bdd) -> Bdd {
        if f.is_const() || cube.is_true() {
            return f;
        }
        let cube = self.cube_from(cube, self.var_of(f));
        if cube.is_true() {
            return f;
        }
        let key = (Op::Exists, f, cube, Bdd::FALSE);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let v = self.var_of(f);
        let (lo, hi) = (self.lo(f), self.hi(f));
        let r = if self.var_of(cube) == v {
            let rest = self.hi(cube);
            let a = self.exists(lo, rest);
            if a.is_true() {
                Bdd::TRUE
            } else {
                let b = self.exists(hi, rest);
                self.or(a, b)
            }
        } else {
            let a = self.exists(lo, cube);
            let b = self.exists(hi, cube);
            self.mk(v, a, b)
        };
        self.remember(key, r);
        r
    }

    /// `∃cube. f ∧ g` without building the conjunction.
    pub fn and_exists(&mut self, f: Bdd, g: Bdd, cube: Bdd) -> Bdd {
        if f.is_false() || g.is_false() {
            return Bdd::FALSE;
        }
        if f.is_true() {
            return self.exists(g, cube);
        }
        if g.is_true() || f == g {
            return self.exists(f, cube);
        }
        let (f, g) = if f < g { (f, g) } else { (g, f) };
        let v = self.top2(f, g);
        let cube = self.cube_from(cube, v);
        if cube.is_true() {
            return self.and(f, g);
        }
        let key = (Op::AndExists, f, g, cube);
        if let Some(r) = self.cached(key) {
            return r;
        }
        let (f0, f1) = self.cofactors(f, v);
        let (g0, g1) = self.cofactors(g, v);
        let r = if self.var_of(cube) == v {
            let rest = self.hi(cube);
            let a = self.and_exists(f0, g0, rest);
            if a.is_true() {
                Bdd::TRUE
            } else {
                let b = self.and_exists(f1, g1, rest);
                self.or(a, b)
            }
        } else {
            let a = self.and_exists(f0, g0, cube);
            let b = self.and_exists(f1, g1, cube);
            self.mk(v, a, b)
        };
        self.remember(key, r);
        r
    }

    /// Substitutes variables according to `map` (indexed by old variable; `u32::MAX` keeps
    /// the variable). The map must be injective on the support of `f`.
    pub fn rename(&mut self, f: Bdd, map: &[u32]) -> Bdd {
        let mut memo = FxHashMap::default();
        self.rename_rec(f, map, &mut memo)
    }

    fn rename_rec(&mut self, f: Bdd, map: &[u32], memo: &mut FxHashMap<Bdd, Bdd>) -> Bdd {
        if f.is_const() {
            return f;
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let v = self.var_of(f);
        let (lo, hi) = (self.lo(f), self.hi(f));
        let lo = self.rename_rec(lo, map, memo);
        let hi = self.rename_rec(hi, map, memo);
        let nv = match map.get(v as usize) {
            Some(&m) if m != u32::MAX => m,
            _ => v,
        };
        // Fast path when the new variable still sits above both children.
        let r = if nv < self.var_of(lo) && nv < self.var_of(hi) {
            self.mk(nv, lo, hi)
        } else {
            let x = self.var(nv);
            self.ite(x, hi, lo)
        };
        memo.insert(f, r);
        r
    }

    /// Evaluates `f` under the assignment.
    pub fn eval(&self, mut f: Bdd, assignment: impl Fn(u32) -> bool) -> bool {
        while !f.is_const() {
            f = if assignment(self.var_of(f)) {
                self.hi(f)
            } else {
                self.lo(f)
            };
        }
        f.is_true()
    }

    /// The lexicographically least satisfying assignment as the list of variables set to 1;
    /// variables not on the chosen path are 0.
    pub fn pick_min(&self, mut f: Bdd) -> Option<Vec<u32>> {
        if f.is_false() {
            return None;
        }
        let mut ones = Vec::new();
        while !f.is_const() {
            let lo = self.lo(f);
            if lo.is_false() {
                ones.push(self.var_of(f));
                f = self.hi(f);
            } else {
                f = lo;
            }
        }
        Some(ones)
    }

    /// Number of satisfying assignments over variables `0..nvars`.
    pub fn sat_count(&self, f: Bdd, nvars: u32) -> f64 {
        let mut memo = FxHashMap::default();
        self.sat_rec(f, nvars, &mut memo) * 2f64.powi(self.level(f, nvars) as i32)
    }

    fn level(&self, f: Bdd, nvars: u32) -> u32 {
        if f.is_const() {
            nvars
        } else {
            self.var_of(f)
        }
    }

    fn sat_rec(&self, f: Bdd, nvars: u32, memo: &mut FxHashMap<Bdd, f64>) -> f64 {
        if f.is_const() {
            return if f.is_true() { 1.0 } else { 0.0 };
        }
        if let Some(&c) = memo.get(&f) {
            return c;
        }
        let v = self.var_of(f);
        let (lo, hi) = (self.lo(f), self.hi(f));
        let c = self.sat_rec(lo, nvars, memo) * 2f64.powi((self.level(lo, nvars) - v - 1) as i32)
            + self.sat_rec(hi, nvars, memo) * 2f64.powi((self.level(hi, nvars) - v - 1) as i32);
        memo.insert(f, c);
        c
    }

    /// Number of distinct nodes reachable from `f`, terminals included.
    pub fn size(&self, f: Bdd) -> usize {
        let mut seen = rustc_hash::FxHashSet::default();
        let mut stack = vec![f];
        while let Some(g) = stack.pop() {
            if seen.insert(g) && !g.is_const() {
                stack.push(self.lo(g));
                stack.push(self.hi(g));
            }
        }
        seen.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignments(n: u32) -> impl Iterator<Item = u32> {
        0..(1u32 << n)
    }

    fn bit(a: u32, v: u32) -> bool {
        a >> v & 1 == 1
    }

    #[test]
    fn boolean_operations_match_truth_tables() {
        let mut m = Manager::new();
        let (x, y, z) = (m.var(0), m.var(1), m.var(2));
        let xy = m.and(x, y);
        let f = m.or(xy, z);
        let g = m.xor(x, z);
        let h = m.ite(y, f, g);
        let nh = m.not(h);
        for a in assignments(3) {
            let (a0, a1, a2) = (bit(a, 0), bit(a, 1), bit(a, 2));
            let fv = (a0 && a1) || a2;
            let gv = a0 ^ a2;
            let hv = if a1 { fv } else { gv };
            assert_eq!(m.eval(f, |v| bit(a, v)), fv);
            assert_eq!(m.eval(h, |v| bit(a, v)), hv);
            assert_eq!(m.eval(nh, |v| bit(a, v)), !hv);
        }
        assert_eq!(m.sat_count(f, 3), 5.0);
    }

    #[test]
    fn canonical_forms_are_shared() {
        let mut m = Manager::new();
        let (x, y) = (m.var(0), m.var(1));
        let a = m.and(x, y);
        let nx = m.not(x);
        let ny = m.not(y);
        let o = m.or(nx, ny);
        let b = m.not(o);
        assert_eq!(a, b);
    }

    #[test]
    fn quantification() {
        let mut m = Manager::new();
        let (x, y) = (m.var(0), m.var(1));
        let f = m.and(x, y);
        let c = m.cube(&[0]);
        assert_eq!(m.exists(f, c), y);
        let g = m.or(x, y);
        let ny = m.not(y);
        assert_eq!(m.and_exists(g, ny, c), ny);
        let both = m.cube(&[0, 1]);
        assert!(m.exists(f, both).is_true());
    }

    #[test]
    fn rename_moves_support() {
        let mut m = Manager::new();
        let (x, z) = (m.var(0), m.var(2));
        let f = m.and(x, z);
        let mut map = vec![u32::MAX; 3];
        map[0] = 1;
        let g = m.rename(f, &map);
        let y = m.var(1);
        assert_eq!(g, m.and(y, z));
        // order-reversing map
        let mut rev = vec![u32::MAX; 3];
        rev[0] = 2;
        rev[2] = 0;
        let nx = m.not(x);
        let h = m.and(nx, z);
        let r = m.rename(h, &rev);
        let nz = m.not(z);
        assert_eq!(r, m.and(nz, x));
    }

    #[test]
    fn pick_prefers_zeros() {
        let mut m = Manager::new();
        let (x, y) = (m.var(0), m.var(1));
        let f = m.or(x, y);
        assert_eq!(m.pick_min(f), Some(vec![1]));
        assert_eq!(m.pick_min(Bdd::FALSE), None);
        assert_eq!(m.pick_min(Bdd::TRUE), Some(vec![]));
    }

    #[test]
    fn limit_marks_exhaustion() {
        let mut m = Manager::with_limit(Some(4));
        let mut f = Bdd::FALSE;
        for v in 0..6 {
            let x = m.var(v);
            f = m.xor(f, x);
        }
        assert!(m.exhausted());
    }
}
