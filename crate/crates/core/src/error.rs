use thiserror::Error;

/// Errors shared across the crate.
///
/// `Disjoint` is not a fault: it is the regular outcome of unifying two
/// structures whose scopes do not overlap. Everything else indicates bad
/// input or an exhausted search budget.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ontology violation: {0}")]
    Ontology(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("scopes are disjoint: {0}")]
    Disjoint(String),

    #[error("pairing budget exceeded ({0} evaluations)")]
    BudgetExceeded(u64),

    #[error("time-order arrows contain a cycle")]
    ArrowCycle,

    #[error("unsupported trump configuration: {0}")]
    TrumpConfig(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, col, msg: msg.into() }
    }

    /// True for the "no result" outcome of unification-like operations.
    pub fn is_disjoint(&self) -> bool {
        matches!(self, Error::Disjoint(_))
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
