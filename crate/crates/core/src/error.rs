use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CqaError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("relation `{0}` occurs more than once in the query")]
    SelfJoin(String),
    #[error("relation `{relation}` has arity {expected} but was used with {found} terms")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("consistent relation `{relation}` holds two key-equal facts with key ({key})")]
    InconsistentConsistentRelation { relation: String, key: String },
    #[error("substitution has {vars} variables but {values} constants")]
    LengthMismatch { vars: usize, values: usize },
    #[error("atom `{0}` does not belong to the query")]
    AtomNotInQuery(String),
    #[error("variable `{0}` does not occur in the query")]
    UnknownVariable(String),
    #[error("the attack graph is cyclic ({0}); no first-order rewriting exists")]
    NotFoQuery(String),
    #[error("repair space too large: {count} exceeds cap {cap}")]
    RepairSpaceTooLarge { count: String, cap: u128 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("database is not gpurified: {0}")]
    NotGPurified(String),
    #[error("query has no consistent atom")]
    NoConsistentAtom,
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),
}

pub type Result<T, E = CqaError> = std::result::Result<T, E>;
