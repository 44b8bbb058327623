use std::fmt::{self, Write};

use super::ast::{Command, Expr, Program};

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn write_expr(f: &mut impl Write, e: &Expr, min_prec: u8) -> fmt::Result {
    match e {
        Expr::Const(v) => write!(f, "{v}"),
        Expr::Var(name) => f.write_str(name),
        Expr::Binary(op, a, b) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                f.write_char('(')?;
            }
            write_expr(f, a, prec)?;
            write!(f, " {} ", op.symbol())?;
            // left associative: an equal-precedence right operand needs parentheses
            write_expr(f, b, prec + 1)?;
            if paren {
                f.write_char(')')?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Skip { .. } => f.write_str("skip"),
            Command::Assign { target, expr, .. } => write!(f, "{target} := {expr}"),
            Command::Declass { target, expr, .. } => write!(f, "{target} := declass({expr})"),
            Command::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => write!(f, "if {cond} then {then_branch} else {else_branch} fi"),
            Command::While { cond, body, .. } => write!(f, "while {cond} do {body} od"),
            Command::Seq(a, b) => write!(f, "{a}; {b}"),
            Command::Input { target, channel, .. } => write!(f, "input({target}, {channel})"),
            Command::Output { expr, channel, .. } => write!(f, "output({expr}, {channel})"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// Renders program text that parses back to the same AST.
pub fn pretty_print(p: &Program) -> String {
    p.to_string()
}
