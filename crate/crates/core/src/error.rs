use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state vector length {0} is not 2, 4 or 8")]
    BadLength(usize),

    #[error("amplitude {index} is not finite")]
    NonFinite { index: usize },

    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),

    #[error("qubit index {qubit} out of range for a {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("invalid measurement basis: {0}")]
    InvalidBasis(String),

    #[error("expected {expected} bases, got {got}")]
    BasisCountMismatch { expected: usize, got: usize },

    #[error("invalid qubit subset: {0}")]
    InvalidSubset(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("expected a {expected}-qubit state, got {got}")]
    WrongQubitCount { expected: usize, got: usize },

    #[error("eigenvalue iteration did not converge in {0} sweeps")]
    NoConvergence(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid game specification: {0}")]
    InvalidGame(String),

    #[error("transport: {0}")]
    Transport(#[from] crate::transport::TransportError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
