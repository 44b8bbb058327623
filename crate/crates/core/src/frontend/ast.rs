//! Abstract syntax of the source language.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Binary operators available in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    /// Bitwise and.
    And,
    /// Bitwise or.
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 9] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::And => "&",
            BinOp::Or => "|",
        }
    }

    /// Binding strength; larger binds tighter. All operators are left associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le)
    }

    /// Applies the operator to values of width `bits`; comparisons yield 0 or 1.
    pub fn apply(self, a: u64, b: u64, bits: u32) -> u64 {
        let mask = width_mask(bits);
        let v = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Eq => (a == b) as u64,
            BinOp::Ne => (a != b) as u64,
            BinOp::Lt => (a < b) as u64,
            BinOp::Le => (a <= b) as u64,
            BinOp::And => a & b,
            BinOp::Or => a | b,
        };
        v & mask
    }
}

/// All-ones mask for a `bits`-wide value.
pub fn width_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(u64),
    Var(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Variables occurring in the expression, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates with `lookup` supplying variable values; arithmetic is modulo `2^bits`.
    pub fn eval(&self, bits: u32, lookup: &impl Fn(&str) -> u64) -> u64 {
        match self {
            Expr::Const(v) => v & width_mask(bits),
            Expr::Var(name) => lookup(name) & width_mask(bits),
            Expr::Binary(op, a, b) => op.apply(a.eval(bits, lookup), b.eval(bits, lookup), bits),
        }
    }
}

/// Stable per-command label: the index of the command in preorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub usize);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteKind {
    Plain,
    Declass,
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteLabel {
    pub id: SiteId,
    pub kind: SiteKind,
    pub channel: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Skip {
        site: SiteId,
    },
    Assign {
        site: SiteId,
        target: String,
        expr: Expr,
    },
    Declass {
        site: SiteId,
        target: String,
        expr: Expr,
    },
    If {
        site: SiteId,
        cond: Expr,
        then_branch: Box<Command>,
        else_branch: Box<Command>,
    },
    While {
        site: SiteId,
        cond: Expr,
        body: Box<Command>,
    },
    Seq(Box<Command>, Box<Command>),
    Input {
        site: SiteId,
        target: String,
        channel: String,
    },
    Output {
        site: SiteId,
        expr: Expr,
        channel: String,
    },
}

impl Command {
    /// The site label; `None` only for sequences, which are not command occurrences.
    pub fn site(&self) -> Option<SiteId> {
        match self {
            Command::Skip { site }
            | Command::Assign { site, .. }
            | Command::Declass { site, .. }
            | Command::If { site, .. }
            | Command::While { site, .. }
            | Command::Input { site, .. }
            | Command::Output { site, .. } => Some(*site),
            Command::Seq(..) => None,
        }
    }

    /// Visits every command node in preorder (sequences included).
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Command)) {
        f(self);
        match self {
            Command::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                else_branch.walk(f);
            }
            Command::While { body, .. } => body.walk(f),
            Command::Seq(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// Reassigns site ids in preorder and returns the resulting label table.
    pub fn relabel(&mut self) -> Vec<SiteLabel> {
        let mut sites = Vec::new();
        self.relabel_into(&mut sites);
        sites
    }

    fn relabel_into(&mut self, sites: &mut Vec<SiteLabel>) {
        let next = SiteId(sites.len());
        let (kind, channel) = match self {
            Command::Seq(a, b) => {
                a.relabel_into(sites);
                b.relabel_into(sites);
                return;
            }
            Command::Declass { .. } => (SiteKind::Declass, None),
            Command::Input { channel, .. } => (SiteKind::Input, Some(channel.clone())),
            Command::Output { channel, .. } => (SiteKind::Output, Some(channel.clone())),
            _ => (SiteKind::Plain, None),
        };
        match self {
            Command::Skip { site }
            | Command::Assign { site, .. }
            | Command::Declass { site, .. }
            | Command::If { site, .. }
            | Command::While { site, .. }
            | Command::Input { site, .. }
            | Command::Output { site, .. } => *site = next,
            Command::Seq(..) => unreachable!(),
        }
        sites.push(SiteLabel {
            id: next,
            kind,
            channel,
        });
        match self {
            Command::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.relabel_into(sites);
                else_branch.relabel_into(sites);
            }
            Command::While { body, .. } => body.relabel_into(sites),
            _ => {}
        }
    }
}

/// Direction of a channel as used by the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub root: Command,
    pub sites: Vec<SiteLabel>,
}

impl Program {
    /// Builds a program from a command tree, assigning site labels in preorder.
    pub fn new(mut root: Command) -> Program {
        let sites = root.relabel();
        Program { root, sites }
    }

    /// All variable names, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.root.walk(&mut |c| match c {
            Command::Assign { target, expr, .. } | Command::Declass { target, expr, .. } => {
                vars.insert(target.clone());
                vars.extend(expr.variables().into_iter().map(str::to_string));
            }
            Command::If { cond, .. } | Command::While { cond, .. } => {
                vars.extend(cond.variables().into_iter().map(str::to_string));
            }
            Command::Input { target, .. } => {
                vars.insert(target.clone());
            }
            Command::Output { expr, .. } => {
                vars.extend(expr.variables().into_iter().map(str::to_string));
            }
            Command::Skip { .. } | Command::Seq(..) => {}
        });
        vars
    }

    /// Channels used by the program together with the direction of use.
    pub fn channels(&self) -> BTreeMap<String, Vec<Direction>> {
        let mut out: BTreeMap<String, Vec<Direction>> = BTreeMap::new();
        self.root.walk(&mut |c| {
            let (name, dir) = match c {
                Command::Input { channel, .. } => (channel, Direction::Input),
                Command::Output { channel, .. } => (channel, Direction::Output),
                _ => return,
            };
            let dirs = out.entry(name.clone()).or_default();
            if !dirs.contains(&dir) {
                dirs.push(dir);
            }
        });
        out
    }

    /// Number of `input` statements reading each channel, counting each loop body once.
    pub fn static_input_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        self.root.walk(&mut |c| {
            if let Command::Input { channel, .. } = c {
                *out.entry(channel.clone()).or_insert(0) += 1;
            }
        });
        out
    }

    pub fn command_count(&self) -> usize {
        self.sites.len()
    }

    pub fn find(&self, site: SiteId) -> Option<&Command> {
        let mut found = None;
        self.root.walk(&mut |c| {
            if c.site() == Some(site) {
                found = Some(c);
            }
        });
        found
    }
}
