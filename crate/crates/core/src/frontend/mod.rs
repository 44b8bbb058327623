//! Program and policy front end.

pub mod ast;
pub mod parser;
pub mod policy;
pub mod pretty;

pub use ast::{BinOp, Command, Direction, Expr, Program, SiteId, SiteKind, SiteLabel};
pub use parser::{parse_expr, parse_program};
pub use policy::{domain_of_expr, gather_downgrades, parse_policy, ChannelDecl, DeclassMode, Domain, Lattice, Policy};
pub use pretty::pretty_print;
