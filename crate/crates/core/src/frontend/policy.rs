//! Security lattice and level assignment for variables and channels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::{Command, Direction, Expr, Program, SiteId};
use crate::error::{Error, Result};

/// A security domain, as an index into its lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Domain(pub usize);

/// A finite partial order over named domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    names: Vec<String>,
    /// `leq[a][b]` iff a ⪯ b (reflexive-transitive closure of the declared pairs).
    leq: Vec<Vec<bool>>,
}

impl Lattice {
    /// Builds the reflexive-transitive closure of `pairs` (each `(a, b)` meaning a ⪯ b).
    pub fn from_pairs(names: Vec<String>, pairs: &[(usize, usize)]) -> Result<Lattice> {
        let n = names.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in pairs {
            leq[a][b] = true;
        }
        for k in 0..n {
            let via = leq[k].clone();
            for row in leq.iter_mut().filter(|row| row[k]) {
                for (cell, &reach) in row.iter_mut().zip(&via) {
                    *cell |= reach;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i][j] && leq[j][i] {
                    return Err(Error::Lattice(format!(
                        "cycle between `{}` and `{}`",
                        names[i], names[j]
                    )));
                }
            }
        }
        Ok(Lattice { names, leq })
    }

    /// The canonical two-point lattice `L < H`.
    pub fn two_level() -> Lattice {
        Lattice::from_pairs(vec!["L".into(), "H".into()], &[(0, 1)]).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Domains in declaration order.
    pub fn domains(&self) -> impl Iterator<Item = Domain> + '_ {
        (0..self.names.len()).map(Domain)
    }

    pub fn name(&self, d: Domain) -> &str {
        &self.names[d.0]
    }

    pub fn lookup(&self, name: &str) -> Option<Domain> {
        self.names.iter().position(|n| n == name).map(Domain)
    }

    pub fn leq(&self, a: Domain, b: Domain) -> bool {
        self.leq[a.0][b.0]
    }

    /// Strictly below.
    pub fn lt(&self, a: Domain, b: Domain) -> bool {
        a != b && self.leq(a, b)
    }

    pub fn lub(&self, a: Domain, b: Domain) -> Option<Domain> {
        let upper: Vec<Domain> = self.domains().filter(|&c| self.leq(a, c) && self.leq(b, c)).collect();
        upper.iter().copied().find(|&u| upper.iter().all(|&v| self.leq(u, v)))
    }

    pub fn bottom(&self) -> Option<Domain> {
        self.domains().find(|&d| self.domains().all(|e| self.leq(d, e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelDecl {
    pub level: Domain,
    pub direction: Direction,
    /// Declared input extent; `None` means "use the configured capacity".
    pub length: Option<usize>,
}

/// How a `declass` command behaves under the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclassMode {
    /// σ(e) ⪯ σ(x): identical to an ordinary assignment.
    Ordinary,
    /// A real downgrade from σ(e) to σ(x), labelled as a declassification step.
    Downgrade,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub lattice: Lattice,
    pub vars: BTreeMap<String, Domain>,
    pub channels: BTreeMap<String, ChannelDecl>,
    /// Downgrade relation as `(from, to)` pairs; filled by [`gather_downgrades`].
    pub downgrades: BTreeSet<(Domain, Domain)>,
    pub declass_modes: BTreeMap<SiteId, DeclassMode>,
}

impl Policy {
    pub fn new(lattice: Lattice) -> Policy {
        Policy {
            lattice,
            vars: BTreeMap::new(),
            channels: BTreeMap::new(),
            downgrades: BTreeSet::new(),
            declass_modes: BTreeMap::new(),
        }
    }

    /// The standard two-level policy: names starting with `h` are high, all others low.
    pub fn two_level_for(program: &Program) -> Policy {
        let lattice = Lattice::two_level();
        let (low, high) = (Domain(0), Domain(1));
        let mut policy = Policy::new(lattice);
        let level = |name: &str| if name.starts_with('h') { high } else { low };
        for v in program.variables() {
            policy.vars.insert(v.clone(), level(&v));
        }
        for (name, dirs) in program.channels() {
            policy.channels.insert(
                name.clone(),
                ChannelDecl {
                    level: level(&name),
                    direction: dirs[0],
                    length: None,
                },
            );
        }
        policy
    }

    pub fn var_level(&self, name: &str) -> Result<Domain> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingLevel(name.to_string()))
    }

    pub fn channel(&self, name: &str) -> Result<&ChannelDecl> {
        self.channels
            .get(name)
            .ok_or_else(|| Error::MissingLevel(name.to_string()))
    }

    pub fn level_name(&self, d: Domain) -> &str {
        self.lattice.name(d)
    }

    /// Whether a variable is observable at `level`.
    pub fn var_visible(&self, name: &str, level: Domain) -> bool {
        self.vars.get(name).is_some_and(|&d| self.lattice.leq(d, level))
    }

    pub fn channel_visible(&self, name: &str, level: Domain) -> bool {
        self.channels
            .get(name)
            .is_some_and(|c| self.lattice.leq(c.level, level))
    }

    pub fn declass_mode(&self, site: SiteId) -> DeclassMode {
        self.declass_modes.get(&site).copied().unwrap_or(DeclassMode::Downgrade)
    }

    /// Checks that σ covers the program, channels are used in their declared direction,
    /// and every join needed by an expression exists.
    pub fn check_program(&self, program: &Program) -> Result<()> {
        for v in program.variables() {
            self.var_level(&v)?;
        }
        for (name, dirs) in program.channels() {
            let decl = self.channel(&name)?;
            for d in dirs {
                if d != decl.direction {
                    return Err(Error::ChannelDirection {
                        channel: name.clone(),
                        declared: decl.direction.as_str(),
                        used: d.as_str(),
                    });
                }
            }
        }
        let mut result = Ok(());
        program.root.walk(&mut |c| {
            if result.is_err() {
                return;
            }
            let e = match c {
                Command::Assign { expr, .. } | Command::Declass { expr, .. } | Command::Output { expr, .. } => expr,
                Command::If { cond, .. } | Command::While { cond, .. } => cond,
                _ => return,
            };
            if let Err(err) = domain_of_expr(e, self) {
                result = Err(err);
            }
        });
        result
    }
}

/// σ(e): the join of the levels of the variables in `e`; the least element when `e` has none.
pub fn domain_of_expr(e: &Expr, policy: &Policy) -> Result<Domain> {
    let lattice = &policy.lattice;
    let mut acc = lattice.bottom().ok_or(Error::NoBottom)?;
    for v in e.variables() {
        let d = policy.var_level(v)?;
        acc = lattice
            .lub(acc, d)
            .ok_or_else(|| Error::UndefinedLub(lattice.name(acc).to_string(), lattice.name(d).to_string()))?;
    }
    Ok(acc)
}

/// Collects the downgrade relation from the program's `declass` commands and classifies
/// each declass site. Idempotent.
pub fn gather_downgrades(program: &Program, policy: &Policy) -> Result<Policy> {
    let mut out = policy.clone();
    out.downgrades.clear();
    out.declass_modes.clear();
    let mut result = Ok(());
    program.root.walk(&mut |c| {
        let Command::Declass { site, target, expr, .. } = c else {
            return;
        };
        let levels = domain_of_expr(expr, policy).and_then(|de| policy.var_level(target).map(|dx| (de, dx)));
        match levels {
            Ok((de, dx)) => {
                if policy.lattice.leq(de, dx) {
                    out.declass_modes.insert(*site, DeclassMode::Ordinary);
                } else {
                    out.declass_modes.insert(*site, DeclassMode::Downgrade);
                    out.downgrades.insert((de, dx));
                }
            }
            Err(e) => {
                if result.is_ok() {
                    result = Err(e);
                }
            }
        }
    });
    result.map(|_| out)
}

/// Parses the line-oriented policy format:
///
/// ```text
/// # comment
/// lattice: L < M, M < H
/// var h : H
/// channel in0 : L input length 2
/// channel out0 : L output
/// ```
pub fn parse_policy(text: &str) -> Result<Policy> {
    let mut names: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    let mut lattice_line = None;
    let mut vars: Vec<(usize, String, String)> = Vec::new();
    let mut channels: Vec<(usize, String, String, Direction, Option<usize>)> = Vec::new();
    let err = |line: usize, message: String| Error::Policy { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("lattice:") {
            if lattice_line.is_some() {
                return Err(err(line_no, "duplicate lattice declaration".into()));
            }
            lattice_line = Some(line_no);
            let mut intern = |n: &str| -> Result<usize> {
                if !is_ident(n) {
                    return Err(err(line_no, format!("bad level name `{n}`")));
                }
                Ok(match names.iter().position(|m| m == n) {
                    Some(i) => i,
                    None => {
                        names.push(n.to_string());
                        names.len() - 1
                    }
                })
            };
            for item in rest.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    return Err(err(line_no, "empty lattice entry".into()));
                }
                match item.split_once('<') {
                    Some((a, b)) => {
                        let (a, b) = (intern(a.trim())?, intern(b.trim())?);
                        pairs.push((a, b));
                    }
                    None => {
                        intern(item)?;
                    }
                }
            }
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["var", name, ":", level] => {
                vars.push((line_no, name.to_string(), level.to_string()));
            }
            ["channel", name, ":", level, dir, rest @ ..] => {
                let direction = match *dir {
                    "input" => Direction::Input,
                    "output" => Direction::Output,
                    other => return Err(err(line_no, format!("unknown direction `{other}`"))),
                };
                let length = match rest {
                    [] => None,
                    ["length", n] if direction == Direction::Input => Some(
                        n.parse::<usize>()
                            .map_err(|_| err(line_no, format!("bad length `{n}`")))?,
                    ),
                    _ => return Err(err(line_no, "unexpected trailing tokens".into())),
                };
                channels.push((line_no, name.to_string(), level.to_string(), direction, length));
            }
            _ => return Err(err(line_no, format!("unrecognised declaration `{line}`"))),
        }
    }
    if lattice_line.is_none() {
        return Err(err(0, "missing `lattice:` line".into()));
    }
    let lattice = Lattice::from_pairs(names, &pairs)?;
    let mut policy = Policy::new(lattice);
    for (line_no, name, level) in vars {
        if !is_ident(&name) {
            return Err(err(line_no, format!("bad variable name `{name}`")));
        }
        let d = policy
            .lattice
            .lookup(&level)
            .ok_or_else(|| err(line_no, format!("unknown level `{level}`")))?;
        if policy.vars.insert(name.clone(), d).is_some() || policy.channels.contains_key(&name) {
            return Err(err(line_no, format!("duplicate declaration of `{name}`")));
        }
    }
    for (line_no, name, level, direction, length) in channels {
        if !is_ident(&name) {
            return Err(err(line_no, format!("bad channel name `{name}`")));
        }
        let d = policy
            .lattice
            .lookup(&level)
            .ok_or_else(|| err(line_no, format!("unknown level `{level}`")))?;
        let decl = ChannelDecl {
            level: d,
            direction,
            length,
        };
        if policy.vars.contains_key(&name) || policy.channels.insert(name.clone(), decl).is_some() {
            return Err(err(line_no, format!("duplicate declaration of `{name}`")));
        }
    }
    Ok(policy)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.lattice;
        let mut entries = Vec::new();
        for a in l.domains() {
            let covers: Vec<_> = l
                .domains()
                .filter(|&b| l.lt(a, b) && !l.domains().any(|c| l.lt(a, c) && l.lt(c, b)))
                .collect();
            if covers.is_empty() && !l.domains().any(|c| l.lt(c, a)) {
                entries.push(l.name(a).to_string());
            }
            for b in covers {
                entries.push(format!("{} < {}", l.name(a), l.name(b)));
            }
        }
        writeln!(f, "lattice: {}", entries.join(", "))?;
        for (name, d) in &self.vars {
            writeln!(f, "var {name} : {}", l.name(*d))?;
        }
        for (name, c) in &self.channels {
            write!(f, "channel {name} : {} {}", l.name(c.level), c.direction.as_str())?;
            if let Some(n) = c.length {
                write!(f, " length {n}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::{parse_expr, parse_program};

    fn two_level() -> Policy {
        parse_policy("lattice: L < H\nvar h : H\nvar l : L\nvar l1 : L\nvar l2 : L\nvar h1 : H").unwrap()
    }

    #[test]
    fn parses_two_point_lattice() {
        let p = parse_policy("lattice: L < H\nvar h : H\nvar l : L").unwrap();
        let (lo, hi) = (p.lattice.lookup("L").unwrap(), p.lattice.lookup("H").unwrap());
        assert!(p.lattice.lt(lo, hi));
        assert_eq!(p.vars["h"], hi);
        assert_eq!(p.vars["l"], lo);
        assert!(p.downgrades.is_empty());
    }

    #[test]
    fn chain_is_transitively_closed() {
        let p = parse_policy("lattice: L < M, M < H").unwrap();
        let l = &p.lattice;
        assert!(l.leq(l.lookup("L").unwrap(), l.lookup("H").unwrap()));
        assert!(!l.leq(l.lookup("H").unwrap(), l.lookup("L").unwrap()));
        assert_eq!(l.bottom(), l.lookup("L"));
    }

    #[test]
    fn channel_declarations() {
        let p = parse_policy("lattice: L < H\nchannel in0 : L input\nchannel o : H output # x").unwrap();
        let c = &p.channels["in0"];
        assert_eq!((c.level, c.direction, c.length), (Domain(0), Direction::Input, None));
        assert_eq!(p.channels["o"].direction, Direction::Output);
        let p = parse_policy("lattice: L < H\nchannel in0 : L input length 3").unwrap();
        assert_eq!(p.channels["in0"].length, Some(3));
    }

    #[test]
    fn rejects_malformed_policies() {
        assert!(matches!(parse_policy("lattice: L < H, H < L"), Err(Error::Lattice(_))));
        assert!(matches!(
            parse_policy("lattice: L < H\nvar x : L\nvar x : H"),
            Err(Error::Policy { line: 3, .. })
        ));
        assert!(matches!(
            parse_policy("lattice: L < H\nvar x : Q"),
            Err(Error::Policy { .. })
        ));
        assert!(matches!(parse_policy("var x : L"), Err(Error::Policy { .. })));
        assert!(matches!(
            parse_policy("lattice: L < H\nlattice: L"),
            Err(Error::Policy { .. })
        ));
    }

    #[test]
    fn expression_levels() {
        let p = two_level();
        let h = p.lattice.lookup("H").unwrap();
        let l = p.lattice.lookup("L").unwrap();
        assert_eq!(domain_of_expr(&parse_expr("h + l").unwrap(), &p).unwrap(), h);
        assert_eq!(domain_of_expr(&parse_expr("5").unwrap(), &p).unwrap(), l);
        assert_eq!(domain_of_expr(&parse_expr("l1 + l2").unwrap(), &p).unwrap(), l);
        assert!(matches!(
            domain_of_expr(&parse_expr("zz").unwrap(), &p),
            Err(Error::MissingLevel(_))
        ));
    }

    #[test]
    fn undefined_join_is_reported() {
        let p = parse_policy("lattice: L < A, L < B\nvar a : A\nvar b : B").unwrap();
        assert!(matches!(
            domain_of_expr(&parse_expr("a + b").unwrap(), &p),
            Err(Error::UndefinedLub(..))
        ));
        let prog = parse_program("a := a + b").unwrap();
        assert!(p.check_program(&prog).is_err());
    }

    #[test]
    fn gathers_real_downgrades() {
        let p = two_level();
        let (lo, hi) = (Domain(0), Domain(1));
        let p0 = parse_program("l:=h;l:=declass(h)").unwrap();
        let g = gather_downgrades(&p0, &p).unwrap();
        assert_eq!(g.downgrades, BTreeSet::from([(hi, lo)]));
        assert_eq!(g.declass_mode(SiteId(1)), DeclassMode::Downgrade);

        let ord = parse_program("l:=declass(l2)").unwrap();
        let g = gather_downgrades(&ord, &p).unwrap();
        assert!(g.downgrades.is_empty());
        assert_eq!(g.declass_mode(SiteId(0)), DeclassMode::Ordinary);

        let p7 = parse_program("l:=declass(h!=0); if l then l1:=declass(h1) else skip fi").unwrap();
        let g = gather_downgrades(&p7, &p).unwrap();
        assert_eq!(g.downgrades, BTreeSet::from([(hi, lo)]));
        let again = gather_downgrades(&p7, &g).unwrap();
        assert_eq!(again, g);
        for (a, b) in &g.downgrades {
            assert!(!g.lattice.leq(*a, *b));
        }
    }

    #[test]
    fn direction_mismatch_is_rejected() {
        let p = parse_policy("lattice: L < H\nvar x : L\nchannel c : L input").unwrap();
        let prog = parse_program("output(x, c)").unwrap();
        assert!(matches!(p.check_program(&prog), Err(Error::ChannelDirection { .. })));
        let prog = parse_program("output(y, c)").unwrap();
        assert!(matches!(p.check_program(&prog), Err(Error::MissingLevel(_))));
    }

    #[test]
    fn display_round_trips() {
        let text = "lattice: L < M, M < H\nvar h : H\nchannel c : M input length 2\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(parse_policy(&p.to_string()).unwrap(), p);
    }
}
