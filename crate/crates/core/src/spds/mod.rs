//! Symbolic pushdown systems over bounded bit-vector globals.
//!
//! Rules carry relations built from a small constraint language ([`Atom`]) that has two
//! interpretations: direct evaluation on concrete valuations ([`explicit`]) and compilation
//! to decision diagrams ([`symbolic`]).

pub mod bdd;
pub mod explicit;
pub mod symbolic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::frontend::{ast::width_mask, BinOp, SiteId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub cells: Vec<GlobalId>,
}

/// The global domain G: scalar bit-vectors, some grouped into arrays.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Globals {
    pub decls: Vec<GlobalDecl>,
    pub arrays: Vec<ArrayDecl>,
    by_name: BTreeMap<String, GlobalId>,
    arrays_by_name: BTreeMap<String, ArrayId>,
}

impl Globals {
    pub fn new() -> Globals {
        Globals::default()
    }

    pub fn add(&mut self, name: &str, width: u32) -> GlobalId {
        assert!(!self.by_name.contains_key(name), "duplicate global `{name}`");
        let id = GlobalId(self.decls.len());
        self.decls.push(GlobalDecl {
            name: name.to_string(),
            width,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Declares `len` cells named `name[k]` and groups them as an array.
    pub fn add_array(&mut self, name: &str, len: usize, width: u32) -> ArrayId {
        let cells = (0..len).map(|k| self.add(&format!("{name}[{k}]"), width)).collect();
        self.group(name, cells)
    }

    /// Groups already declared cells as an array.
    pub fn group(&mut self, name: &str, cells: Vec<GlobalId>) -> ArrayId {
        let id = ArrayId(self.arrays.len());
        self.arrays.push(ArrayDecl {
            name: name.to_string(),
            cells,
        });
        self.arrays_by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = GlobalId> {
        (0..self.decls.len()).map(GlobalId)
    }

    pub fn lookup(&self, name: &str) -> Option<GlobalId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<GlobalId> {
        self.lookup(name).ok_or_else(|| Error::UnknownGlobal(name.to_string()))
    }

    pub fn array(&self, name: &str) -> Option<ArrayId> {
        self.arrays_by_name.get(name).copied()
    }

    pub fn name(&self, g: GlobalId) -> &str {
        &self.decls[g.0].name
    }

    pub fn width(&self, g: GlobalId) -> u32 {
        self.decls[g.0].width
    }

    pub fn cells(&self, a: ArrayId) -> &[GlobalId] {
        &self.arrays[a.0].cells
    }

    pub fn total_bits(&self) -> u32 {
        self.decls.iter().map(|d| d.width).sum()
    }
}

/// Bit-vector expression over the current valuation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const {
        value: u64,
        width: u32,
    },
    Var(GlobalId),
    Bin(BinOp, Box<Term>, Box<Term>),
    /// Array cell at a computed index; out-of-range indices read 0.
    Select(ArrayId, Box<Term>),
}

impl Term {
    pub fn constant(value: u64, width: u32) -> Term {
        Term::Const {
            value: value & width_mask(width),
            width,
        }
    }

    pub fn var(g: GlobalId) -> Term {
        Term::Var(g)
    }

    pub fn bin(op: BinOp, a: Term, b: Term) -> Term {
        Term::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn select(a: ArrayId, index: Term) -> Term {
        Term::Select(a, Box::new(index))
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::bin(BinOp::Eq, a, b)
    }

    pub fn ne(a: Term, b: Term) -> Term {
        Term::bin(BinOp::Ne, a, b)
    }

    /// Result width: comparisons are one bit, everything else the wider operand.
    pub fn width(&self, g: &Globals) -> u32 {
        match self {
            Term::Const { width, .. } => *width,
            Term::Var(v) => g.width(*v),
            Term::Bin(op, a, b) => {
                if op.is_comparison() {
                    1
                } else {
                    a.width(g).max(b.width(g))
                }
            }
            Term::Select(arr, _) => g.cells(*arr).iter().map(|&c| g.width(c)).max().unwrap_or(1),
        }
    }

    pub fn eval(&self, g: &Globals, v: &[u64]) -> u64 {
        match self {
            Term::Const { value, .. } => *value,
            Term::Var(x) => v[x.0],
            Term::Bin(op, a, b) => op.apply(a.eval(g, v), b.eval(g, v), self.width(g)),
            Term::Select(arr, idx) => {
                let i = idx.eval(g, v);
                g.cells(*arr).get(i as usize).map_or(0, |c| v[c.0])
            }
        }
    }

    /// Rewrites every global through `f` (arrays through `fa`).
    pub fn map(&self, f: &impl Fn(GlobalId) -> GlobalId, fa: &impl Fn(ArrayId) -> ArrayId) -> Term {
        match self {
            Term::Const { .. } => self.clone(),
            Term::Var(x) => Term::Var(f(*x)),
            Term::Bin(op, a, b) => Term::bin(*op, a.map(f, fa), b.map(f, fa)),
            Term::Select(arr, idx) => Term::select(fa(*arr), idx.map(f, fa)),
        }
    }

    fn write(&self, g: &Globals, out: &mut String, min_prec: u8) {
        match self {
            Term::Const { value, .. } => {
                let _ = write!(out, "{value}");
            }
            Term::Var(x) => out.push_str(g.name(*x)),
            Term::Bin(op, a, b) => {
                let prec = op.precedence();
                if prec < min_prec {
                    out.push('(');
                }
                a.write(g, out, prec);
                let _ = write!(out, " {} ", op.symbol());
                b.write(g, out, prec + 1);
                if prec < min_prec {
                    out.push(')');
                }
            }
            Term::Select(arr, idx) => {
                out.push_str(&g.arrays[arr.0].name);
                out.push('[');
                idx.write(g, out, 0);
                out.push(']');
            }
        }
    }

    pub fn render(&self, g: &Globals) -> String {
        let mut s = String::new();
        self.write(g, &mut s, 0);
        s
    }
}

/// One conjunct of a transition relation. Globals whose next value no atom constrains are
/// unconstrained (havoc).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    /// The term evaluates to nonzero in the current valuation.
    Guard(Term),
    /// `g' = term` (truncated or zero-extended to the width of `g`).
    Update(GlobalId, Term),
    /// `a'[index] = value`; every other cell keeps its value. An out-of-range index leaves
    /// the whole array unchanged.
    Store { array: ArrayId, index: Term, value: Term },
    /// `g' = g`.
    Retain(GlobalId),
}

/// A conjunction of atoms over (current, next) valuation pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Relation {
    pub atoms: Vec<Atom>,
}

impl Relation {
    pub fn new() -> Relation {
        Relation::default()
    }

    pub fn guard(mut self, t: Term) -> Relation {
        self.atoms.push(Atom::Guard(t));
        self
    }

    pub fn update(mut self, g: GlobalId, t: Term) -> Relation {
        self.atoms.push(Atom::Update(g, t));
        self
    }

    pub fn store(mut self, array: ArrayId, index: Term, value: Term) -> Relation {
        self.atoms.push(Atom::Store { array, index, value });
        self
    }

    pub fn and(mut self, other: Relation) -> Relation {
        self.atoms.extend(other.atoms);
        self
    }

    /// Conjoins `rt` over every global of `globals` that no atom of `self` writes.
    pub fn framed(self, globals: &Globals) -> Relation {
        let written = self.written(globals);
        let frame: Vec<GlobalId> = globals.ids().filter(|g| !written.contains(g)).collect();
        self.and(rt(&frame))
    }

    /// Conjoins `rt` over the given globals minus those written by `self`.
    pub fn framed_over(self, globals: &Globals, frame: &[GlobalId]) -> Relation {
        let written = self.written(globals);
        let frame: Vec<GlobalId> = frame.iter().copied().filter(|g| !written.contains(g)).collect();
        self.and(rt(&frame))
    }

    /// Globals whose next value is set by an update or array store.
    pub fn written(&self, globals: &Globals) -> BTreeSet<GlobalId> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            match a {
                Atom::Update(g, _) => {
                    out.insert(*g);
                }
                Atom::Store { array, .. } => out.extend(globals.cells(*array).iter().copied()),
                _ => {}
            }
        }
        out
    }

    pub fn retained(&self) -> BTreeSet<GlobalId> {
        self.atoms
            .iter()
            .filter_map(|a| match a {
                Atom::Retain(g) => Some(*g),
                _ => None,
            })
            .collect()
    }

    pub fn guards(&self) -> impl Iterator<Item = &Term> {
        self.atoms.iter().filter_map(|a| match a {
            Atom::Guard(t) => Some(t),
            _ => None,
        })
    }

    /// Rewrites globals and arrays through the given maps.
    pub fn map(&self, f: &impl Fn(GlobalId) -> GlobalId, fa: &impl Fn(ArrayId) -> ArrayId) -> Relation {
        let atoms = self
            .atoms
            .iter()
            .map(|a| match a {
                Atom::Guard(t) => Atom::Guard(t.map(f, fa)),
                Atom::Update(g, t) => Atom::Update(f(*g), t.map(f, fa)),
                Atom::Store { array, index, value } => Atom::Store {
                    array: fa(*array),
                    index: index.map(f, fa),
                    value: value.map(f, fa),
                },
                Atom::Retain(g) => Atom::Retain(f(*g)),
            })
            .collect();
        Relation { atoms }
    }

    /// Renders the constraint for dumps; frames are summarised as `rt(*)` (everything not
    /// written is retained), `rt(* \ {..})` (the listed globals are left free) or an
    /// explicit list when fewer than half the globals are retained.
    pub fn render(&self, g: &Globals) -> String {
        let mut parts = Vec::new();
        for a in &self.atoms {
            match a {
                Atom::Guard(t) => parts.push(t.render(g)),
                Atom::Update(x, t) => parts.push(format!("{}' = {}", g.name(*x), t.render(g))),
                Atom::Store { array, index, value } => parts.push(format!(
                    "{}'[{}] = {}",
                    g.arrays[array.0].name,
                    index.render(g),
                    value.render(g)
                )),
                Atom::Retain(_) => {}
            }
        }
        let retained = self.retained();
        if !retained.is_empty() {
            let written = self.written(g);
            let free: Vec<&str> = g
                .ids()
                .filter(|x| !retained.contains(x) && !written.contains(x))
                .map(|x| g.name(x))
                .collect();
            if free.is_empty() {
                parts.push("rt(*)".to_string());
            } else if free.len() <= retained.len() {
                parts.push(format!("rt(* \\ {{{}}})", free.join(", ")));
            } else {
                let names: Vec<&str> = retained.iter().map(|&x| g.name(x)).collect();
                parts.push(format!("rt({})", names.join(", ")));
            }
        }
        if parts.is_empty() {
            "true".to_string()
        } else {
            parts.join(" && ")
        }
    }
}

/// The retainment relation: every global in `frame` keeps its value; all others are free.
pub fn rt(frame: &[GlobalId]) -> Relation {
    Relation {
        atoms: frame.iter().map(|&g| Atom::Retain(g)).collect(),
    }
}

/// [`rt`] with the frame given by name.
pub fn rt_named(globals: &Globals, names: &[&str]) -> Result<Relation> {
    let ids = names.iter().map(|n| globals.require(n)).collect::<Result<Vec<_>>>()?;
    Ok(rt(&ids))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u32);

/// Which copy of the program a rule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Run {
    First,
    Second,
    /// Rules added by the composer that belong to neither copy.
    Stuffer,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Skip,
    Assign,
    BranchTrue,
    BranchFalse,
    LoopEnter,
    LoopExit,
    InputLow {
        channel: String,
    },
    /// High input: `var` receives an arbitrary value.
    InputHigh {
        channel: String,
        var: String,
    },
    OutputHigh,
    OutputCall {
        channel: String,
    },
    OutputReturn {
        channel: String,
    },
    DeclassEnter,
    DeclassLeave,
    FinalOutput {
        var: String,
    },
    LastTrans,
    Init,
    Reset,
    DeclassStore,
    DeclassMismatch,
    DeclassMatch,
    OutputStore {
        channel: String,
    },
    OutputMismatch {
        channel: String,
    },
    OutputMatch {
        channel: String,
    },
    Terminal,
    Idle,
    MismatchError,
    CheckPass {
        channel: String,
    },
    CheckFail {
        channel: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Origin {
    pub site: Option<SiteId>,
    pub kind: RuleKind,
    pub run: Run,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Symbol,
    pub rhs: Vec<Symbol>,
    pub relation: Relation,
    pub origin: Origin,
}

/// A symbolic pushdown system with a single control location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spds {
    pub globals: Globals,
    pub symbols: Vec<String>,
    pub rules: Vec<Rule>,
    pub start: Symbol,
    /// Conjunction of guards the initial valuation must satisfy.
    pub init: Vec<Term>,
    symbol_index: BTreeMap<String, Symbol>,
}

impl Spds {
    pub fn new(globals: Globals) -> Spds {
        Spds {
            globals,
            symbols: Vec::new(),
            rules: Vec::new(),
            start: Symbol(0),
            init: Vec::new(),
            symbol_index: BTreeMap::new(),
        }
    }

    /// Returns the symbol with this name, declaring it on first use.
    pub fn symbol(&mut self, name: &str) -> Symbol {
        if let Some(&s) = self.symbol_index.get(name) {
            return s;
        }
        let s = Symbol(self.symbols.len() as u32);
        self.symbols.push(name.to_string());
        self.symbol_index.insert(name.to_string(), s);
        s
    }

    pub fn lookup_symbol(&self, name: &str) -> Option<Symbol> {
        self.symbol_index.get(name).copied()
    }

    pub fn symbol_name(&self, s: Symbol) -> &str {
        &self.symbols[s.0 as usize]
    }

    pub fn add_rule(&mut self, lhs: Symbol, rhs: Vec<Symbol>, relation: Relation, origin: Origin) {
        assert!(rhs.len() <= 2, "rule right-hand sides hold at most two symbols");
        self.rules.push(Rule {
            lhs,
            rhs,
            relation,
            origin,
        });
    }

    /// Rules grouped by left-hand symbol, as indices in declaration order.
    pub fn rules_by_lhs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.symbols.len()];
        for (i, r) in self.rules.iter().enumerate() {
            out[r.lhs.0 as usize].push(i);
        }
        out
    }

    /// Checks that every rule symbol is declared and every array cell is a declared global.
    pub fn validate(&self) -> Result<()> {
        let n = self.symbols.len() as u32;
        if self.start.0 >= n {
            return Err(Error::MalformedModel("start symbol undeclared".into()));
        }
        for r in &self.rules {
            if r.lhs.0 >= n || r.rhs.iter().any(|s| s.0 >= n) {
                return Err(Error::MalformedModel("rule uses undeclared symbol".into()));
            }
        }
        for a in &self.globals.arrays {
            if a.cells.iter().any(|c| c.0 >= self.globals.len()) {
                return Err(Error::MalformedModel(format!("array `{}` has bad cells", a.name)));
            }
        }
        Ok(())
    }

    /// Textual dump: one rule per line, `<γ> -> <rhs...> [constraint]`, in declaration order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# globals");
        for d in &self.globals.decls {
            let _ = writeln!(out, "#   {} : {} bits", d.name, d.width);
        }
        let init: Vec<String> = self.init.iter().map(|t| t.render(&self.globals)).collect();
        let _ = writeln!(
            out,
            "# start <{}> [{}]",
            self.symbol_name(self.start),
            if init.is_empty() {
                "true".to_string()
            } else {
                init.join(" && ")
            }
        );
        for r in &self.rules {
            let rhs: Vec<String> = r.rhs.iter().map(|s| format!("<{}>", self.symbol_name(*s))).collect();
            let rhs = if rhs.is_empty() {
                "<ε>".to_string()
            } else {
                rhs.join(" ")
            };
            let _ = writeln!(
                out,
                "<{}> -> {} [{}]",
                self.symbol_name(r.lhs),
                rhs,
                r.relation.render(&self.globals)
            );
        }
        out
    }
}

impl fmt::Display for Spds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// A configuration: a valuation of all globals and a stack word, top first.
pub type State = (Vec<u64>, Vec<Symbol>);

/// One-step image of a set of configurations under `rules`.
pub fn successors(globals: &Globals, states: &BTreeSet<State>, rules: &[Rule]) -> BTreeSet<State> {
    let mut out = BTreeSet::new();
    for (v, stack) in states {
        let Some((&top, rest)) = stack.split_first() else {
            continue;
        };
        for r in rules.iter().filter(|r| r.lhs == top) {
            for next in explicit::post(globals, &r.relation, v) {
                let mut word = r.rhs.clone();
                word.extend_from_slice(rest);
                out.insert((next, word));
            }
        }
    }
    out
}
