//! Self-composition of a level model with a renamed copy of itself.
//!
//! The first run stores its outputs and declassified values; the second run, started
//! from a store agreeing on observable variables, matches against them. The baseline
//! mode instead gives the second run its own output channels and compares both copies
//! after termination.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::frontend::{BinOp, SiteId};
use crate::modelgen::ModelSkeleton;
use crate::spds::{rt, ArrayId, GlobalId, Globals, Origin, Relation, RuleKind, Run, Spds, Symbol, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    StoreMatch,
    /// Duplicated output channels compared after both runs.
    Tr,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::StoreMatch => "storematch",
            Mode::Tr => "tr",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Mode, String> {
        match s {
            "storematch" => Ok(Mode::StoreMatch),
            "tr" => Ok(Mode::Tr),
            other => Err(format!("unknown mode `{other}` (expected storematch or tr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedModel {
    pub spds: Spds,
    pub mode: Mode,
    pub error: Symbol,
    pub idle: Symbol,
    /// Composed id of each skeleton global as seen by the first run.
    pub first: Vec<GlobalId>,
    /// Composed id of each skeleton global as seen by the second run.
    pub second: Vec<GlobalId>,
    /// Second-run copy of each skeleton symbol.
    pub xi_symbols: Vec<Symbol>,
    /// Sticky output-mismatch flag (store-match only).
    pub mismatch: Option<GlobalId>,
}

/// Name of the companion of a global or symbol.
pub fn xi_name(name: &str) -> String {
    format!("ξ({name})")
}

struct Layout {
    globals: Globals,
    first: Vec<GlobalId>,
    second: Vec<GlobalId>,
    first_arrays: Vec<ArrayId>,
    second_arrays: Vec<ArrayId>,
    /// Globals outside the first run's image (companions and the flag).
    companions: Vec<GlobalId>,
    mismatch: Option<GlobalId>,
}

fn layout(sk: &ModelSkeleton, mode: Mode) -> Layout {
    let g = &sk.spds.globals;
    let program: Vec<GlobalId> = sk.vars.iter().map(|(_, id)| *id).collect();
    let mut duplicated = program.clone();
    if mode == Mode::Tr {
        for o in &sk.outputs {
            duplicated.extend(g.cells(o.cells));
            duplicated.push(o.counter);
        }
    }
    let mut globals = Globals::new();
    let mut first = Vec::with_capacity(g.len());
    let mut second = Vec::with_capacity(g.len());
    let mut companions = Vec::new();
    for id in g.ids() {
        let d = &g.decls[id.0];
        let a = globals.add(&d.name, d.width);
        first.push(a);
        if duplicated.contains(&id) {
            let b = globals.add(&xi_name(&d.name), d.width);
            companions.push(b);
            second.push(b);
        } else {
            second.push(a);
        }
    }
    let mismatch = (mode == Mode::StoreMatch).then(|| {
        let f = globals.add("@mismatch", 1);
        companions.push(f);
        f
    });
    let mut first_arrays = Vec::new();
    let mut second_arrays = Vec::new();
    for a in &g.arrays {
        let cells1: Vec<GlobalId> = a.cells.iter().map(|c| first[c.0]).collect();
        let cells2: Vec<GlobalId> = a.cells.iter().map(|c| second[c.0]).collect();
        let renamed = cells1 != cells2;
        first_arrays.push(globals.group(&a.name, cells1));
        second_arrays.push(if renamed {
            globals.group(&xi_name(&a.name), cells2)
        } else {
            *first_arrays.last().expect("just pushed")
        });
    }
    Layout {
        globals,
        first,
        second,
        first_arrays,
        second_arrays,
        companions,
        mismatch,
    }
}

struct Composer {
    l: Layout,
    spds: Spds,
    xi: Vec<Symbol>,
}

impl Composer {
    fn first(&self, r: &Relation) -> Relation {
        r.map(&|g| self.l.first[g.0], &|a| self.l.first_arrays[a.0])
    }

    fn second(&self, r: &Relation) -> Relation {
        r.map(&|g| self.l.second[g.0], &|a| self.l.second_arrays[a.0])
    }

    /// Globals the second run's renaming never reaches.
    fn first_only(&self) -> Vec<GlobalId> {
        let mut out: Vec<GlobalId> = self
            .l
            .first
            .iter()
            .zip(&self.l.second)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| *a)
            .collect();
        out.extend(self.l.mismatch);
        out
    }

    fn add(&mut self, lhs: Symbol, rhs: Vec<Symbol>, rel: Relation, site: Option<SiteId>, kind: RuleKind, run: Run) {
        self.spds.add_rule(lhs, rhs, rel, Origin { site, kind, run });
    }

    fn all_framed(&self, r: Relation) -> Relation {
        r.framed(&self.spds.globals)
    }

    fn var1(&self, g: GlobalId) -> GlobalId {
        self.l.first[g.0]
    }

    fn var2(&self, g: GlobalId) -> GlobalId {
        self.l.second[g.0]
    }
}

/// Store-match self-composition of a level model.
pub fn self_compose(sk: &ModelSkeleton) -> Result<ComposedModel> {
    compose(sk, Mode::StoreMatch)
}

/// Baseline composition with duplicated output channels.
pub fn tr_compose(sk: &ModelSkeleton) -> Result<ComposedModel> {
    compose(sk, Mode::Tr)
}

pub fn compose(sk: &ModelSkeleton, mode: Mode) -> Result<ComposedModel> {
    check_skeleton(sk)?;
    let l = layout(sk, mode);
    let mut spds = Spds::new(l.globals.clone());
    for name in &sk.spds.symbols {
        spds.symbol(name);
    }
    let xi: Vec<Symbol> = sk.spds.symbols.iter().map(|n| spds.symbol(&xi_name(n))).collect();
    let init = spds.symbol("init");
    let error = spds.symbol("error");
    let idle = spds.symbol("idle");
    let mut c = Composer { l, spds, xi };
    let g = &sk.spds.globals;

    // initial interleaving: companions of observable variables copy the first run's values
    let mut r = Relation::new();
    for x in &sk.low_vars {
        let id = g.lookup(x).expect("program variable is declared");
        r = r.update(c.var2(id), Term::var(c.var1(id)));
    }
    let r = c.all_framed(r);
    c.add(init, vec![sk.start], r, None, RuleKind::Init, Run::Stuffer);

    // first run
    let companions = c.l.companions.clone();
    for rule in &sk.spds.rules {
        if rule.origin.kind == RuleKind::LastTrans {
            continue;
        }
        let rel = c.first(&rule.relation).and(rt(&companions));
        c.add(
            rule.lhs,
            rule.rhs.clone(),
            rel,
            rule.origin.site,
            rule.origin.kind.clone(),
            Run::First,
        );
    }

    // second run
    let first_only = c.first_only();
    for rule in &sk.spds.rules {
        let lhs = c.xi[rule.lhs.0 as usize];
        let rhs: Vec<Symbol> = rule.rhs.iter().map(|s| c.xi[s.0 as usize]).collect();
        let rel = c.second(&rule.relation).and(rt(&first_only));
        if rule.origin.kind == RuleKind::LastTrans {
            match mode {
                Mode::StoreMatch => {
                    c.add(lhs, vec![lhs], rel, None, RuleKind::Terminal, Run::Second);
                }
                Mode::Tr => {
                    let chk = c.spds.symbol("check.0");
                    c.add(lhs, vec![chk], rel, None, RuleKind::Terminal, Run::Second);
                }
            }
            let mut reset = Relation::new();
            for i in &sk.inputs {
                let p = c.var1(i.counter);
                reset = reset.update(p, Term::constant(0, g.width(i.counter)));
            }
            if mode == Mode::StoreMatch {
                for o in &sk.outputs {
                    let q = c.var1(o.counter);
                    reset = reset.update(q, Term::constant(0, g.width(o.counter)));
                }
            }
            let reset = c.all_framed(reset);
            let target = c.xi[sk.start.0 as usize];
            c.add(rule.lhs, vec![target], reset, None, RuleKind::Reset, Run::Stuffer);
        } else {
            c.add(lhs, rhs, rel, rule.origin.site, rule.origin.kind.clone(), Run::Second);
        }
    }

    // declassification bodies
    let tmp = sk.tmp.map(|t| c.var1(t));
    for d in &sk.declass_sites {
        let tmp = tmp.expect("declass sites allocate tmp");
        let cell = c.var1(g.cells(sk.declass_cells.expect("declass sites allocate cells"))[d.slot]);
        let x = g.lookup(&d.target).expect("declass target is declared");
        let r = c.all_framed(
            Relation::new()
                .update(cell, Term::var(tmp))
                .update(c.var1(x), Term::var(tmp)),
        );
        c.add(
            d.entry,
            vec![d.exit],
            r,
            Some(d.site),
            RuleKind::DeclassStore,
            Run::First,
        );
        let (e2, x2) = (c.xi[d.entry.0 as usize], c.xi[d.exit.0 as usize]);
        let r = c.all_framed(Relation::new().guard(Term::ne(Term::var(cell), Term::var(tmp))));
        c.add(e2, vec![idle], r, Some(d.site), RuleKind::DeclassMismatch, Run::Second);
        let r = c.all_framed(
            Relation::new()
                .guard(Term::eq(Term::var(cell), Term::var(tmp)))
                .update(c.var2(x), Term::var(tmp)),
        );
        c.add(e2, vec![x2], r, Some(d.site), RuleKind::DeclassMatch, Run::Second);
    }

    // output bodies
    for o in &sk.outputs {
        // without tmp nothing is ever written, so the channel has no body
        let Some(tmp) = tmp else { continue };
        let channel = o.name.clone();
        let w = g.width(o.counter);
        let cap = Term::constant(o.capacity as u64, w);
        let store_body = |q: GlobalId, cells: ArrayId| {
            Relation::new()
                .guard(Term::bin(BinOp::Lt, Term::var(q), cap.clone()))
                .store(cells, Term::var(q), Term::var(tmp))
                .update(q, Term::bin(BinOp::Add, Term::var(q), Term::constant(1, w)))
        };
        let (q1, cells1) = (c.var1(o.counter), c.l.first_arrays[o.cells.0]);
        let r = c.all_framed(store_body(q1, cells1));
        c.add(
            o.entry,
            vec![o.exit],
            r,
            None,
            RuleKind::OutputStore {
                channel: channel.clone(),
            },
            Run::First,
        );
        let (e2, x2) = (c.xi[o.entry.0 as usize], c.xi[o.exit.0 as usize]);
        match mode {
            Mode::StoreMatch => {
                let flag = c.l.mismatch.expect("store-match allocates the flag");
                let stored = Term::select(cells1, Term::var(q1));
                let bump = |r: Relation| {
                    r.guard(Term::bin(BinOp::Lt, Term::var(q1), cap.clone()))
                        .update(q1, Term::bin(BinOp::Add, Term::var(q1), Term::constant(1, w)))
                };
                let r = c.all_framed(
                    bump(Relation::new().guard(Term::ne(stored.clone(), Term::var(tmp))))
                        .update(flag, Term::constant(1, 1)),
                );
                c.add(
                    e2,
                    vec![x2],
                    r,
                    None,
                    RuleKind::OutputMismatch {
                        channel: channel.clone(),
                    },
                    Run::Second,
                );
                let r = c.all_framed(bump(Relation::new().guard(Term::eq(stored, Term::var(tmp)))));
                c.add(e2, vec![x2], r, None, RuleKind::OutputMatch { channel }, Run::Second);
            }
            Mode::Tr => {
                let (q2, cells2) = (c.var2(o.counter), c.l.second_arrays[o.cells.0]);
                let r = c.all_framed(store_body(q2, cells2));
                c.add(e2, vec![x2], r, None, RuleKind::OutputStore { channel }, Run::Second);
            }
        }
    }

    // illegal-flow state
    match mode {
        Mode::StoreMatch => {
            let flag = c.l.mismatch.expect("store-match allocates the flag");
            let fin = c.xi[sk.final_symbol.0 as usize];
            let r = c.all_framed(Relation::new().guard(Term::eq(Term::var(flag), Term::constant(1, 1))));
            c.add(fin, vec![error], r, None, RuleKind::MismatchError, Run::Stuffer);
        }
        Mode::Tr => {
            for (k, o) in sk.outputs.iter().enumerate() {
                let chk = c.spds.symbol(&format!("check.{k}"));
                let next = c.spds.symbol(&format!("check.{}", k + 1));
                let channel = o.name.clone();
                let (q1, q2) = (Term::var(c.var1(o.counter)), Term::var(c.var2(o.counter)));
                let w = g.width(o.counter);
                let r = c.all_framed(Relation::new().guard(Term::ne(q1.clone(), q2.clone())));
                c.add(
                    chk,
                    vec![error],
                    r,
                    None,
                    RuleKind::CheckFail {
                        channel: channel.clone(),
                    },
                    Run::Stuffer,
                );
                let mut pass = Relation::new().guard(Term::eq(q1.clone(), q2));
                for (i, &cell) in g.cells(o.cells).iter().enumerate() {
                    let written = Term::bin(BinOp::Lt, Term::constant(i as u64, w), q1.clone());
                    let differs = Term::ne(Term::var(c.var1(cell)), Term::var(c.var2(cell)));
                    let r = c.all_framed(Relation::new().guard(written.clone()).guard(differs.clone()));
                    c.add(
                        chk,
                        vec![error],
                        r,
                        None,
                        RuleKind::CheckFail {
                            channel: channel.clone(),
                        },
                        Run::Stuffer,
                    );
                    pass = pass.guard(Term::bin(
                        BinOp::Or,
                        Term::eq(written, Term::constant(0, 1)),
                        Term::eq(differs, Term::constant(0, 1)),
                    ));
                }
                let r = c.all_framed(pass);
                c.add(chk, vec![next], r, None, RuleKind::CheckPass { channel }, Run::Stuffer);
            }
            let last = c.spds.symbol(&format!("check.{}", sk.outputs.len()));
            let r = c.all_framed(Relation::new());
            c.add(last, vec![last], r, None, RuleKind::Terminal, Run::Stuffer);
        }
    }
    let r = c.all_framed(Relation::new());
    c.add(idle, vec![idle], r, None, RuleKind::Idle, Run::Stuffer);

    let mut spds = c.spds;
    spds.start = init;
    spds.init = sk
        .spds
        .init
        .iter()
        .map(|t| t.map(&|g| c.l.first[g.0], &|a| c.l.first_arrays[a.0]))
        .collect();
    if mode == Mode::Tr {
        for o in &sk.outputs {
            let q2 = c.l.second[o.counter.0];
            spds.init
                .push(Term::eq(Term::var(q2), Term::constant(0, g.width(o.counter))));
        }
    }
    if let Some(f) = c.l.mismatch {
        spds.init.push(Term::eq(Term::var(f), Term::constant(0, 1)));
    }
    spds.validate()?;
    Ok(ComposedModel {
        spds,
        mode,
        error,
        idle,
        first: c.l.first,
        second: c.l.second,
        xi_symbols: c.xi,
        mismatch: c.l.mismatch,
    })
}

fn check_skeleton(sk: &ModelSkeleton) -> Result<()> {
    let n = sk.spds.symbols.len() as u32;
    let bad = |s: Symbol| s.0 >= n;
    if sk.declass_sites.iter().any(|d| bad(d.entry) || bad(d.exit))
        || sk.outputs.iter().any(|o| bad(o.entry) || bad(o.exit))
        || bad(sk.final_symbol)
    {
        return Err(Error::MalformedModel("skeleton lacks entry/exit symbols".into()));
    }
    if !sk.declass_sites.is_empty() && (sk.tmp.is_none() || sk.declass_cells.is_none()) {
        return Err(Error::MalformedModel(
            "declass sites without tmp or declass cells".into(),
        ));
    }
    let lasts = sk
        .spds
        .rules
        .iter()
        .filter(|r| r.origin.kind == RuleKind::LastTrans)
        .count();
    if lasts != 1 {
        return Err(Error::MalformedModel(format!(
            "expected one termination rule, found {lasts}"
        )));
    }
    Ok(())
}

impl ComposedModel {
    pub fn dump(&self) -> String {
        self.spds.dump()
    }

    pub fn rule_count(&self) -> usize {
        self.spds.rules.len()
    }

    pub fn total_bits(&self) -> u32 {
        self.spds.globals.total_bits()
    }

    pub fn globals(&self) -> &Globals {
        &self.spds.globals
    }

    /// The skeleton-to-composed global maps keyed by name, for decoding.
    pub fn companions(&self, sk: &ModelSkeleton) -> BTreeMap<String, (GlobalId, GlobalId)> {
        sk.vars
            .iter()
            .map(|(name, id)| (name.clone(), (self.first[id.0], self.second[id.0])))
            .collect()
    }
}
