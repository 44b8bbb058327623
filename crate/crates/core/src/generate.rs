//! Seeded random programs over a fixed two-level vocabulary.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frontend::{BinOp, Program};

/// Policy covering every name the generator uses.
pub const POLICY: &str = "\
lattice: L < H
var h : H
var h1 : H
var h2 : H
var l : L
var l1 : L
var l2 : L
channel in0 : L input
channel inH : H input
channel out0 : L output
channel outH : H output
";

const HIGH: [&str; 3] = ["h", "h1", "h2"];
const LOW: [&str; 3] = ["l", "l1", "l2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_vars: usize,
    /// Upper bound on command occurrences (sequencing excluded).
    pub max_commands: usize,
    pub max_loops: usize,
    pub declass: bool,
    pub io: bool,
    pub max_const: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_vars: 3,
            max_commands: 6,
            max_loops: 1,
            declass: true,
            io: true,
            max_const: 3,
        }
    }
}

pub struct Generator {
    rng: ChaCha8Rng,
    cfg: GenConfig,
}

struct Draft<'a> {
    vars: Vec<&'static str>,
    budget: usize,
    loops: usize,
    cfg: &'a GenConfig,
}

impl Generator {
    pub fn new(seed: u64, cfg: GenConfig) -> Generator {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    /// Source text of the next program.
    pub fn source(&mut self) -> String {
        loop {
            let src = self.draft();
            let count = crate::frontend::parse_program(&src).map_or(usize::MAX, |p| p.command_count());
            if count <= self.cfg.max_commands {
                return src;
            }
        }
    }

    fn draft(&mut self) -> String {
        let n = self.rng.gen_range(1..=self.cfg.max_vars.max(1));
        let mut pool: Vec<&'static str> = HIGH.iter().chain(LOW.iter()).copied().collect();
        pool.shuffle(&mut self.rng);
        let mut vars: Vec<&'static str> = pool.into_iter().take(n).collect();
        // keep at least one observable and, when room allows, one secret variable
        if !vars.iter().any(|v| v.starts_with('l')) {
            vars[0] = LOW[self.rng.gen_range(0..LOW.len())];
        }
        if n > 1 && !vars.iter().any(|v| v.starts_with('h')) {
            vars[1] = HIGH[self.rng.gen_range(0..HIGH.len())];
        }
        vars.sort_unstable();
        vars.dedup();
        let cfg = self.cfg;
        let mut d = Draft {
            vars,
            budget: self.rng.gen_range(1..=cfg.max_commands.max(1)),
            loops: 0,
            cfg: &cfg,
        };
        self.block(&mut d)
    }

    pub fn program(&mut self) -> Program {
        let src = self.source();
        crate::frontend::parse_program(&src).unwrap_or_else(|e| panic!("generated `{src}` does not parse: {e}"))
    }

    fn block(&mut self, d: &mut Draft) -> String {
        let mut parts = vec![self.command(d)];
        while d.budget > 0 && self.rng.gen_bool(0.6) {
            parts.push(self.command(d));
        }
        parts.join("; ")
    }

    fn command(&mut self, d: &mut Draft) -> String {
        d.budget = d.budget.saturating_sub(1);
        let compound = d.budget >= 2;
        loop {
            match self.rng.gen_range(0..10) {
                0..=2 => {
                    let x = self.var(d);
                    return format!("{x} := {}", self.expr(d, 2));
                }
                3 | 4 if d.cfg.declass => {
                    let x = self.var(d);
                    return format!("{x} := declass({})", self.expr(d, 1));
                }
                5 if d.cfg.io => {
                    let x = self.var(d);
                    let ch = if self.rng.gen_bool(0.5) { "in0" } else { "inH" };
                    return format!("input({x}, {ch})");
                }
                6 if d.cfg.io => {
                    let ch = if self.rng.gen_bool(0.5) { "out0" } else { "outH" };
                    return format!("output({}, {ch})", self.expr(d, 1));
                }
                7 | 8 if compound => {
                    let c = self.expr(d, 1);
                    let t = self.block(d);
                    let e = if d.budget > 0 && self.rng.gen_bool(0.5) {
                        self.block(d)
                    } else {
                        d.budget = d.budget.saturating_sub(1);
                        "skip".to_string()
                    };
                    return format!("if {c} then {t} else {e} fi");
                }
                9 if compound && d.loops < d.cfg.max_loops => {
                    d.loops += 1;
                    let c = self.expr(d, 1);
                    let b = self.block(d);
                    return format!("while {c} do {b} od");
                }
                _ => {
                    if !compound && self.rng.gen_bool(0.1) {
                        return "skip".to_string();
                    }
                }
            }
        }
    }

    fn var(&mut self, d: &Draft) -> &'static str {
        d.vars[self.rng.gen_range(0..d.vars.len())]
    }

    fn expr(&mut self, d: &Draft, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.45) {
            return if self.rng.gen_bool(0.65) {
                self.var(d).to_string()
            } else {
                self.rng.gen_range(0..=d.cfg.max_const).to_string()
            };
        }
        let op = BinOp::ALL[self.rng.gen_range(0..BinOp::ALL.len())];
        format!(
            "({} {} {})",
            self.expr(d, depth - 1),
            op.symbol(),
            self.expr(d, depth - 1)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_policy, Command};

    #[test]
    fn respects_bounds() {
        let policy = parse_policy(POLICY).unwrap();
        let mut g = Generator::new(7, GenConfig::default());
        for _ in 0..500 {
            let p = g.program();
            assert!(p.command_count() <= 6, "{p}");
            assert!(p.variables().len() <= 3, "{p}");
            let mut loops = 0;
            p.root
                .walk(&mut |c| loops += matches!(c, Command::While { .. }) as usize);
            assert!(loops <= 1);
            policy.check_program(&p).unwrap();
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a: Vec<String> = (0..20)
            .map({
                let mut g = Generator::new(3, GenConfig::default());
                move |_| g.source()
            })
            .collect();
        let mut g = Generator::new(3, GenConfig::default());
        let b: Vec<String> = (0..20).map(|_| g.source()).collect();
        assert_eq!(a, b);
    }
}
