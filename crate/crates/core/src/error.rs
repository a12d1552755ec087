use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text is not well-formed JSON.
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    /// A circuit violates the IR invariants. `gate` names the offending
    /// gate index when the problem is local to one gate.
    #[error("{}", match .gate {
        Some(g) => format!("invalid gate {g}: {message}"),
        None => format!("invalid circuit: {message}"),
    })]
    Validation { gate: Option<usize>, message: String },

    #[error("family error: {0}")]
    Family(String),

    #[error("gate relation error: {0}")]
    Relation(String),

    #[error("fusion refused: combined support of {support} qubits exceeds {limit}")]
    FusionRefused { support: usize, limit: usize },

    #[error("unknown backend `{name}` (configured: {})", .available.join(", "))]
    UnknownBackend { name: String, available: Vec<String> },

    /// A backend rejected a statement. `statement` is the plan index when
    /// the failure happened while running a plan.
    #[error("{}", match .statement {
        Some(k) => format!("backend {backend} failed at statement {k}: {message}"),
        None => format!("backend {backend}: {message}"),
    })]
    Backend {
        backend: String,
        statement: Option<usize>,
        message: String,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dense simulation refused: {qubits} qubits exceeds the limit of {limit}")]
    OracleRefused { qubits: usize, limit: usize },

    #[error("state is not normalized (total probability {0})")]
    Unnormalized(f64),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(gate: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Validation {
            gate: gate.into(),
            message: message.into(),
        }
    }

    pub(crate) fn backend(backend: &str, message: impl ToString) -> Self {
        Error::Backend {
            backend: backend.to_string(),
            statement: None,
            message: message.to_string(),
        }
    }

    /// Attaches a plan statement index to a backend error.
    pub(crate) fn at_statement(self, index: usize) -> Self {
        match self {
            Error::Backend {
                backend, message, ..
            } => Error::Backend {
                backend,
                statement: Some(index),
                message,
            },
            other => other,
        }
    }
}
