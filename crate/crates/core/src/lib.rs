//! Where-security checking for a small imperative language with I/O channels.
//!
//! Programs are translated per security level into symbolic pushdown systems,
//! self-composed with the store-match construction and checked for reachability
//! of an illegal-flow state. A concrete interpreter and a brute-force oracle
//! provide ground truth at small bit-widths.

pub mod analysis;
pub mod compose;
pub mod error;
pub mod frontend;
pub mod generate;
pub mod modelgen;
pub mod oracle;
pub mod properties;
pub mod reach;
pub mod semantics;
pub mod spds;

pub use error::{Error, Result};
