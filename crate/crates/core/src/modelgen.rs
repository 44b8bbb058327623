//! Translation of a program into a pushdown model for one security level.
//!
//! Only channels observable at the level are modelled. High inputs assign an arbitrary
//! value, high outputs behave like `skip`. Output and declassification bodies are left
//! empty (entry and exit symbols without a connecting rule) for the composer to fill.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frontend::{BinOp, Command, DeclassMode, Direction, Domain, Expr, Policy, Program, SiteId};
use crate::spds::{rt, ArrayId, GlobalId, Globals, Origin, Relation, RuleKind, Run, Spds, Symbol, Term};

/// Channel receiving the final values of observable variables.
pub const FINAL_CHANNEL: &str = "finalvars";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclassSite {
    pub site: SiteId,
    pub target: String,
    pub entry: Symbol,
    pub exit: Symbol,
    /// Index into the declassified-value array.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputChannel {
    pub name: String,
    pub entry: Symbol,
    pub exit: Symbol,
    pub cells: ArrayId,
    pub counter: GlobalId,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputChannel {
    pub name: String,
    pub cells: ArrayId,
    pub counter: GlobalId,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSkeleton {
    pub spds: Spds,
    pub level: Domain,
    pub bits: u32,
    pub capacity: usize,
    /// Program variables (sorted) and their globals.
    pub vars: Vec<(String, GlobalId)>,
    /// Variables observable at the level, in the order they are written to `finalvars`.
    pub low_vars: Vec<String>,
    pub tmp: Option<GlobalId>,
    pub declass_cells: Option<ArrayId>,
    pub declass_sites: Vec<DeclassSite>,
    /// Observable output channels, sorted, with `finalvars` last.
    pub outputs: Vec<OutputChannel>,
    pub inputs: Vec<InputChannel>,
    pub rho: BTreeMap<SiteId, usize>,
    pub start: Symbol,
    /// Symbol whose only rule is the program's termination transition.
    pub final_symbol: Symbol,
    pub site_table: Vec<String>,
}

/// Bit budget of a model, broken down by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BitBudget {
    pub program_vars: u32,
    pub tmp: u32,
    pub declass: u32,
    pub channels: u32,
    pub total: u32,
}

/// Number of bits needed to represent `n`.
pub fn bit_length(n: usize) -> u32 {
    (usize::BITS - n.leading_zeros()).max(1)
}

pub fn count_globals(sk: &ModelSkeleton) -> BitBudget {
    let g = &sk.spds.globals;
    let program_vars = sk.vars.iter().map(|(_, id)| g.width(*id)).sum();
    let tmp = sk.tmp.map_or(0, |t| g.width(t));
    let declass = sk
        .declass_cells
        .map_or(0, |a| g.cells(a).iter().map(|&c| g.width(c)).sum());
    let channel_bits = |cells: ArrayId, counter: GlobalId| -> u32 {
        g.cells(cells).iter().map(|&c| g.width(c)).sum::<u32>() + g.width(counter)
    };
    let channels = sk
        .outputs
        .iter()
        .map(|o| channel_bits(o.cells, o.counter))
        .chain(sk.inputs.iter().map(|i| channel_bits(i.cells, i.counter)))
        .sum();
    BitBudget {
        program_vars,
        tmp,
        declass,
        channels,
        total: g.total_bits(),
    }
}

struct Builder<'a> {
    policy: &'a Policy,
    bits: u32,
    spds: Spds,
    vars: BTreeMap<String, GlobalId>,
    tmp: Option<GlobalId>,
    inputs: BTreeMap<String, InputChannel>,
    outputs: BTreeMap<String, OutputChannel>,
    declass: BTreeMap<SiteId, DeclassSite>,
}

impl Builder<'_> {
    fn term(&self, e: &Expr) -> Term {
        match e {
            Expr::Const(v) => Term::constant(*v, self.bits),
            Expr::Var(x) => Term::var(self.vars[x]),
            Expr::Binary(op, a, b) => {
                let t = Term::bin(*op, self.term(a), self.term(b));
                if op.is_comparison() {
                    // comparisons produce one bit; widen so enclosing arithmetic wraps at `bits`
                    Term::bin(BinOp::Or, t, Term::constant(0, self.bits))
                } else {
                    t
                }
            }
        }
    }

    fn frame(&self, r: Relation) -> Relation {
        r.framed(&self.spds.globals)
    }

    fn origin(site: Option<SiteId>, kind: RuleKind) -> Origin {
        Origin {
            site,
            kind,
            run: Run::First,
        }
    }

    fn rule(&mut self, lhs: Symbol, rhs: Vec<Symbol>, rel: Relation, site: Option<SiteId>, kind: RuleKind) {
        self.spds.add_rule(lhs, rhs, rel, Self::origin(site, kind));
    }

    fn site_symbol(&mut self, c: &Command) -> Symbol {
        match c {
            Command::Seq(a, _) => self.site_symbol(a),
            _ => {
                let site = c.site().expect("non-sequence commands carry a site");
                self.spds.symbol(&site.to_string())
            }
        }
    }

    fn compile(&mut self, c: &Command, next: Symbol) {
        if let Command::Seq(a, b) = c {
            let mid = self.site_symbol(b);
            self.compile(a, mid);
            self.compile(b, next);
            return;
        }
        let site = c.site();
        let me = self.site_symbol(c);
        match c {
            Command::Skip { .. } => {
                let r = self.frame(Relation::new());
                self.rule(me, vec![next], r, site, RuleKind::Skip);
            }
            Command::Assign { target, expr, .. } => {
                let r = self.frame(Relation::new().update(self.vars[target], self.term(expr)));
                self.rule(me, vec![next], r, site, RuleKind::Assign);
            }
            Command::Declass { site: s, target, expr } => match self.policy.declass_mode(*s) {
                DeclassMode::Ordinary => {
                    let r = self.frame(Relation::new().update(self.vars[target], self.term(expr)));
                    self.rule(me, vec![next], r, site, RuleKind::Assign);
                }
                DeclassMode::Downgrade => {
                    let d = &self.declass[s];
                    let (entry, exit) = (d.entry, d.exit);
                    let tmp = self.tmp.expect("allocated with declass sites");
                    let r = self.frame(Relation::new().update(tmp, self.term(expr)));
                    self.rule(me, vec![entry], r, site, RuleKind::DeclassEnter);
                    let r = self.frame(Relation::new());
                    self.rule(exit, vec![next], r, site, RuleKind::DeclassLeave);
                }
            },
            Command::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let t = self.site_symbol(then_branch);
                let e = self.site_symbol(else_branch);
                let c = self.term(cond);
                let r = self.frame(Relation::new().guard(c.clone()));
                self.rule(me, vec![t], r, site, RuleKind::BranchTrue);
                let zero = Term::constant(0, self.bits);
                let r = self.frame(Relation::new().guard(Term::eq(c, zero)));
                self.rule(me, vec![e], r, site, RuleKind::BranchFalse);
                self.compile(then_branch, next);
                self.compile(else_branch, next);
            }
            Command::While { cond, body, .. } => {
                let b = self.site_symbol(body);
                let c = self.term(cond);
                let r = self.frame(Relation::new().guard(c.clone()));
                self.rule(me, vec![b], r, site, RuleKind::LoopEnter);
                let zero = Term::constant(0, self.bits);
                let r = self.frame(Relation::new().guard(Term::eq(c, zero)));
                self.rule(me, vec![next], r, site, RuleKind::LoopExit);
                self.compile(body, me);
            }
            Command::Input { target, channel, .. } => {
                let x = self.vars[target];
                if let Some(ch) = self.inputs.get(channel) {
                    let w = self.spds.globals.width(ch.counter);
                    let p = Term::var(ch.counter);
                    let r = Relation::new()
                        .guard(Term::bin(BinOp::Lt, p.clone(), Term::constant(ch.length as u64, w)))
                        .update(x, Term::select(ch.cells, p.clone()))
                        .update(ch.counter, Term::bin(BinOp::Add, p, Term::constant(1, w)));
                    let r = self.frame(r);
                    let kind = RuleKind::InputLow {
                        channel: channel.clone(),
                    };
                    self.rule(me, vec![next], r, site, kind);
                } else {
                    let keep: Vec<GlobalId> = self.spds.globals.ids().filter(|&g| g != x).collect();
                    let kind = RuleKind::InputHigh {
                        channel: channel.clone(),
                        var: target.clone(),
                    };
                    self.rule(me, vec![next], rt(&keep), site, kind);
                }
            }
            Command::Output { expr, channel, .. } => {
                if let Some(ch) = self.outputs.get(channel) {
                    let entry = ch.entry;
                    let tmp = self.tmp.expect("allocated with observable outputs");
                    let r = self.frame(Relation::new().update(tmp, self.term(expr)));
                    let kind = RuleKind::OutputCall {
                        channel: channel.clone(),
                    };
                    self.rule(me, vec![entry, next], r, site, kind);
                } else {
                    let r = self.frame(Relation::new());
                    self.rule(me, vec![next], r, site, RuleKind::OutputHigh);
                }
            }
            Command::Seq(..) => unreachable!(),
        }
    }
}

/// Builds the model of `program` observed at `level`. The policy must already carry the
/// declassification modes computed by `gather_downgrades`.
pub fn build_model(
    program: &Program,
    policy: &Policy,
    level: Domain,
    bits: u32,
    capacity: usize,
) -> Result<ModelSkeleton> {
    policy.check_program(program)?;
    let channels = program.channels();
    if channels.contains_key(FINAL_CHANNEL) {
        return Err(Error::MalformedModel(format!(
            "channel name `{FINAL_CHANNEL}` is reserved"
        )));
    }
    let mut globals = Globals::new();
    let mut vars = BTreeMap::new();
    for v in program.variables() {
        vars.insert(v.clone(), globals.add(&v, bits));
    }
    let low_vars: Vec<String> = vars.keys().filter(|v| policy.var_visible(v, level)).cloned().collect();

    let mut downgrade_sites = Vec::new();
    program.root.walk(&mut |c| {
        if let Command::Declass { site, target, .. } = c {
            if policy.declass_mode(*site) == DeclassMode::Downgrade {
                downgrade_sites.push((*site, target.clone()));
            }
        }
    });
    let observable = |name: &str| policy.channel_visible(name, level);
    let observable_outputs = channels
        .iter()
        .any(|(name, dirs)| dirs.contains(&Direction::Output) && observable(name));
    let tmp =
        (!downgrade_sites.is_empty() || observable_outputs || !low_vars.is_empty()).then(|| globals.add("@tmp", bits));
    let declass_cells = (!downgrade_sites.is_empty()).then(|| globals.add_array("@D", downgrade_sites.len(), bits));

    let mut inputs = BTreeMap::new();
    let mut out_decls: Vec<(String, usize)> = Vec::new();
    for (name, dirs) in &channels {
        if !observable(name) {
            continue;
        }
        match dirs[0] {
            Direction::Input => {
                let length = policy.channel(name)?.length.unwrap_or(capacity);
                let cells = globals.add_array(&format!("@I.{name}"), length, bits);
                let counter = globals.add(&format!("@p.{name}"), bit_length(length + 1));
                inputs.insert(
                    name.clone(),
                    InputChannel {
                        name: name.clone(),
                        cells,
                        counter,
                        length,
                    },
                );
            }
            Direction::Output => out_decls.push((name.clone(), capacity)),
        }
    }
    out_decls.push((FINAL_CHANNEL.to_string(), low_vars.len()));

    let mut spds = Spds::new(Globals::new());
    let mut outputs = BTreeMap::new();
    let mut output_order = Vec::new();
    for (name, cap) in out_decls {
        let cells = globals.add_array(&format!("@O.{name}"), cap, bits);
        let counter = globals.add(&format!("@q.{name}"), bit_length(cap + 1));
        let entry = spds.symbol(&format!("output_entry.{name}"));
        let exit = spds.symbol(&format!("output_exit.{name}"));
        output_order.push(name.clone());
        outputs.insert(
            name.clone(),
            OutputChannel {
                name,
                entry,
                exit,
                cells,
                counter,
                capacity: cap,
            },
        );
    }
    spds.globals = globals;

    let mut declass = BTreeMap::new();
    let mut rho = BTreeMap::new();
    for (slot, (site, target)) in downgrade_sites.iter().enumerate() {
        let entry = spds.symbol(&format!("declass_entry.{site}"));
        let exit = spds.symbol(&format!("declass_exit.{site}"));
        rho.insert(*site, slot);
        declass.insert(
            *site,
            DeclassSite {
                site: *site,
                target: target.clone(),
                entry,
                exit,
                slot,
            },
        );
    }

    let mut b = Builder {
        policy,
        bits,
        spds,
        vars: vars.clone(),
        tmp,
        inputs,
        outputs,
        declass,
    };

    let start = b.site_symbol(&program.root);
    let final_symbol = b.spds.symbol("final");
    let final_chain: Vec<Symbol> = (0..low_vars.len())
        .map(|k| b.spds.symbol(&format!("finalvars.{k}")))
        .chain(std::iter::once(final_symbol))
        .collect();
    b.compile(&program.root, final_chain[0]);

    let fv_entry = b.outputs[FINAL_CHANNEL].entry;
    for (k, x) in low_vars.iter().enumerate() {
        let r = b.frame(Relation::new().update(tmp.expect("allocated with low variables"), Term::var(vars[x])));
        let kind = RuleKind::FinalOutput { var: x.clone() };
        b.rule(final_chain[k], vec![fv_entry, final_chain[k + 1]], r, None, kind);
    }
    let r = b.frame(Relation::new());
    b.rule(final_symbol, vec![], r, None, RuleKind::LastTrans);
    for name in &output_order {
        let exit = b.outputs[name].exit;
        let r = b.frame(Relation::new());
        let kind = RuleKind::OutputReturn { channel: name.clone() };
        b.rule(exit, vec![], r, None, kind);
    }

    let mut spds = b.spds;
    spds.start = start;
    for ch in b.inputs.values() {
        spds.init.push(Term::eq(
            Term::var(ch.counter),
            Term::constant(0, spds.globals.width(ch.counter)),
        ));
    }
    for name in &output_order {
        let c = b.outputs[name].counter;
        spds.init
            .push(Term::eq(Term::var(c), Term::constant(0, spds.globals.width(c))));
    }
    spds.validate()?;

    let mut site_table = Vec::new();
    program.root.walk(&mut |c| {
        let Some(site) = c.site() else { return };
        let head = match c {
            Command::If { cond, .. } => format!("if {cond}"),
            Command::While { cond, .. } => format!("while {cond}"),
            other => other.to_string(),
        };
        let mut line = format!("{site}: {head}");
        if let Some(slot) = rho.get(&site) {
            let _ = write!(line, " [declassification, slot {slot}]");
        }
        site_table.push(line);
    });

    Ok(ModelSkeleton {
        spds,
        level,
        bits,
        capacity,
        vars: vars.into_iter().collect(),
        low_vars,
        tmp,
        declass_cells,
        declass_sites: b.declass.into_values().collect(),
        outputs: output_order.iter().map(|n| b.outputs[n].clone()).collect(),
        inputs: b.inputs.into_values().collect(),
        rho,
        start,
        final_symbol,
        site_table,
    })
}

impl ModelSkeleton {
    /// Model dump followed by the site table as comments.
    pub fn dump(&self) -> String {
        let mut out = self.spds.dump();
        out.push_str("# sites\n");
        for line in &self.site_table {
            let _ = writeln!(out, "#   {line}");
        }
        out
    }

    pub fn output(&self, name: &str) -> Option<&OutputChannel> {
        self.outputs.iter().find(|o| o.name == name)
    }
}
