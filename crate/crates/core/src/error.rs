use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("control and target must differ (both {0})")]
    SameQubit(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{n_qubits} qubits exceeds the dense eigensolver limit of {limit}")]
    TooManyQubits { n_qubits: usize, limit: usize },

    #[error("objective returned non-finite value {value} at evaluation {evaluation}")]
    NonFiniteObjective { value: f64, evaluation: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need {needed} candidates for selection, only {available} available")]
    InsufficientCandidates { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
