use thiserror::Error;

/// Errors surfaced by parsing, policy validation and analysis.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },

    #[error("policy error at line {line}: {message}")]
    Policy { line: usize, message: String },

    #[error("malformed lattice: {0}")]
    Lattice(String),

    #[error("no security level declared for `{0}`")]
    MissingLevel(String),

    #[error("channel `{channel}` is declared {declared} but used as {used}")]
    ChannelDirection {
        channel: String,
        declared: &'static str,
        used: &'static str,
    },

    #[error("levels `{0}` and `{1}` have no least upper bound")]
    UndefinedLub(String, String),

    #[error("the lattice has no least element")]
    NoBottom,

    #[error("unknown global `{0}`")]
    UnknownGlobal(String),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("enumeration budget exceeded: {needed} pairs > {budget}")]
    EnumerationBudget { needed: u128, budget: u128 },

    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
