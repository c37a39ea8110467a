use thiserror::Error;

use crate::query::QueryError;
use crate::relation::RelationError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("atom {relation} has {atom} attributes but the relation has {stored} columns")]
    AtomArity {
        relation: String,
        atom: usize,
        stored: usize,
    },
    #[error("tuple for {relation} has {found} values, expected {expected}")]
    TupleArity {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("query is not a path: {0}")]
    NotAPath(String),
    #[error("query is cyclic; supply a hypertree decomposition")]
    Cyclic,
    #[error("representative domain of {relation} has {size} tuples, above the oracle limit of {limit}")]
    OracleGuard { relation: String, size: u128, limit: u128 },
    #[error("invalid 3CNF input: {0}")]
    Cnf(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Failures of the computation itself (overflow, budgets, guards) as
    /// opposed to malformed input.
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            Error::Relation(RelationError::Overflow { .. })
                | Error::Relation(RelationError::MemoryBudget { .. })
                | Error::OracleGuard { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
