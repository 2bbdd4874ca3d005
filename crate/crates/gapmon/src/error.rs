use thiserror::Error;

/// Crate-wide error type. Every fallible public operation returns [`Result`].
#[derive(Debug, Error)]
pub enum Error {
    /// A model component violates one of its invariants. `at` is a path-like
    /// locator of the first violated constraint, e.g. `hmm.A.row[2]`.
    #[error("invalid model at {at}: {reason}")]
    InvalidModel { at: String, reason: String },

    /// A file could not be parsed (syntax or unresolvable name).
    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    /// The model assigns probability zero to an observed item.
    #[error("impossible observation: {0}")]
    ImpossibleObservation(String),

    /// Baum-Welch received input it cannot learn from (e.g. a zero mask that
    /// makes a training trace impossible).
    #[error("degenerate training input: {0}")]
    DegenerateInput(String),

    /// Precomputation would need more nodes than allowed.
    #[error("table limit exceeded: unfolding needs more than {max_nodes} nodes")]
    TableLimitExceeded { max_nodes: usize },

    /// A trace item uses a symbol, gap-distribution id, or peek value that the
    /// model or precomputed table does not declare.
    #[error("unknown label in trace: {0}")]
    UnknownLabel(String),

    /// A precomputed table was built from a different model.
    #[error("model digest mismatch: table was built for {expected}, got {actual}")]
    DigestMismatch { expected: String, actual: String },

    /// The brute-force oracle would need to enumerate too many gap fillings.
    #[error("oracle budget exceeded: {needed} gap fillings > budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 invalid input/model, 3 impossible
    /// observation, 4 resource limit, 5 internal error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidModel { .. }
            | Error::Parse { .. }
            | Error::DegenerateInput(_)
            | Error::UnknownLabel(_)
            | Error::DigestMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::Io(_) => 2,
            Error::ImpossibleObservation(_) => 3,
            Error::TableLimitExceeded { .. } | Error::BudgetExceeded { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
