//! Program transformations behind the prudent-principle property checks.
//!
//! Each transformation returns a fresh program with site labels reassigned, so the
//! result can go straight to the oracle or the analyzer.

use crate::frontend::{Command, Expr, Program, SiteId};

/// Command rewrites that preserve the semantics of a declassification-free command `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rewrite {
    /// `C` becomes `C; skip`.
    SeqSkip,
    /// `C` becomes `skip; C`.
    SkipSeq,
    /// `C` becomes `if 1 then C else skip fi`.
    IfTrue,
    /// `C` becomes `if 0 then skip else C fi`.
    IfFalse,
    /// `C` becomes `while 0 do skip od; C`.
    DeadLoop,
    /// `C` becomes `if e then C else C fi` for a condition `e` over the variables of `C`.
    SameBranches,
}

impl Rewrite {
    pub const ALL: [Rewrite; 6] = [
        Rewrite::SeqSkip,
        Rewrite::SkipSeq,
        Rewrite::IfTrue,
        Rewrite::IfFalse,
        Rewrite::DeadLoop,
        Rewrite::SameBranches,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rewrite::SeqSkip => "C;skip",
            Rewrite::SkipSeq => "skip;C",
            Rewrite::IfTrue => "if 1 then C else skip fi",
            Rewrite::IfFalse => "if 0 then skip else C fi",
            Rewrite::DeadLoop => "while 0 do skip od;C",
            Rewrite::SameBranches => "if e then C else C fi",
        }
    }

    fn apply(self, c: Command) -> Command {
        let skip = || Command::Skip { site: SiteId(0) };
        let seq = |a: Command, b: Command| Command::Seq(Box::new(a), Box::new(b));
        let cond = |v: u64| Expr::Const(v);
        match self {
            Rewrite::SeqSkip => seq(c, skip()),
            Rewrite::SkipSeq => seq(skip(), c),
            Rewrite::IfTrue => Command::If {
                site: SiteId(0),
                cond: cond(1),
                then_branch: Box::new(c),
                else_branch: Box::new(skip()),
            },
            Rewrite::IfFalse => Command::If {
                site: SiteId(0),
                cond: cond(0),
                then_branch: Box::new(skip()),
                else_branch: Box::new(c),
            },
            Rewrite::DeadLoop => seq(
                Command::While {
                    site: SiteId(0),
                    cond: cond(0),
                    body: Box::new(skip()),
                },
                c,
            ),
            Rewrite::SameBranches => {
                // branching on a variable C already reads keeps the set of names unchanged
                let e = first_read(&c).map_or_else(|| cond(1), Expr::var);
                Command::If {
                    site: SiteId(0),
                    cond: e,
                    then_branch: Box::new(c.clone()),
                    else_branch: Box::new(c),
                }
            }
        }
    }
}

fn first_read(c: &Command) -> Option<&str> {
    let mut found = None;
    c.walk(&mut |c| {
        if found.is_some() {
            return;
        }
        let e = match c {
            Command::Assign { expr, .. } | Command::Output { expr, .. } => expr,
            Command::If { cond, .. } | Command::While { cond, .. } => cond,
            _ => return,
        };
        found = e.variables().first().copied();
    });
    found
}

pub fn is_declass_free(c: &Command) -> bool {
    let mut free = true;
    c.walk(&mut |c| free &= !matches!(c, Command::Declass { .. }));
    free
}

/// Sites of plain assignments `x := e`.
pub fn assignment_sites(p: &Program) -> Vec<SiteId> {
    let mut sites = Vec::new();
    p.root.walk(&mut |c| {
        if let Command::Assign { site, .. } = c {
            sites.push(*site);
        }
    });
    sites
}

/// Replaces the assignment at `site` by `x := declass(e)`.
pub fn declassify_at(p: &Program, site: SiteId) -> Option<Program> {
    let mut hit = false;
    let root = map_at(&p.root, site, &mut |c| match c {
        Command::Assign { site, target, expr } => {
            hit = true;
            Command::Declass { site, target, expr }
        }
        other => other,
    });
    hit.then(|| Program::new(root))
}

/// Sites of declassification-free, non-sequence command occurrences.
pub fn rewrite_sites(p: &Program) -> Vec<SiteId> {
    let mut sites = Vec::new();
    p.root.walk(&mut |c| {
        if let Some(s) = c.site() {
            if is_declass_free(c) {
                sites.push(s);
            }
        }
    });
    sites
}

/// Applies `rw` to the command occurrence at `site`, which must be declassification-free.
pub fn rewrite_at(p: &Program, site: SiteId, rw: Rewrite) -> Option<Program> {
    let target = p.find(site)?;
    if !is_declass_free(target) {
        return None;
    }
    let root = map_at(&p.root, site, &mut |c| rw.apply(c));
    Some(Program::new(root))
}

/// Copies `c`, replacing the node labelled `site` by `f` of it.
fn map_at(c: &Command, site: SiteId, f: &mut impl FnMut(Command) -> Command) -> Command {
    if c.site() == Some(site) {
        return f(c.clone());
    }
    match c {
        Command::Seq(a, b) => Command::Seq(Box::new(map_at(a, site, f)), Box::new(map_at(b, site, f))),
        Command::If {
            site: s,
            cond,
            then_branch,
            else_branch,
        } => Command::If {
            site: *s,
            cond: cond.clone(),
            then_branch: Box::new(map_at(then_branch, site, f)),
            else_branch: Box::new(map_at(else_branch, site, f)),
        },
        Command::While { site: s, cond, body } => Command::While {
            site: *s,
            cond: cond.clone(),
            body: Box::new(map_at(body, site, f)),
        },
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, pretty_print};

    fn show(p: &Program) -> String {
        pretty_print(p)
    }

    #[test]
    fn rewrites_wrap_the_chosen_command() {
        let p = parse_program("l := h; h := 0").unwrap();
        let site = rewrite_sites(&p)[0];
        let q = rewrite_at(&p, site, Rewrite::IfTrue).unwrap();
        assert_eq!(
            q,
            parse_program("if 1 then l := h else skip fi; h := 0").unwrap(),
            "{}",
            show(&q)
        );
        let q = rewrite_at(&p, site, Rewrite::SameBranches).unwrap();
        assert_eq!(
            q,
            parse_program("if h then l := h else l := h fi; h := 0").unwrap(),
            "{}",
            show(&q)
        );
    }

    #[test]
    fn declass_commands_are_not_rewritten() {
        let p = parse_program("l := declass(h)").unwrap();
        assert!(rewrite_sites(&p).is_empty());
        assert!(rewrite_at(&p, SiteId(0), Rewrite::SeqSkip).is_none());
    }

    #[test]
    fn declassify_turns_one_assignment() {
        let p = parse_program("l := h; l1 := h").unwrap();
        let sites = assignment_sites(&p);
        assert_eq!(sites.len(), 2);
        let q = declassify_at(&p, sites[1]).unwrap();
        assert_eq!(q, parse_program("l := h; l1 := declass(h)").unwrap());
    }
}
