//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, graph algorithms, I/O, and solver
/// interaction.
#[derive(Debug, Error)]
pub enum Error {
    /// A CI statement violated the validity conditions (empty or overlapping
    /// x/y/z parts).
    #[error("invalid CI statement: {0}")]
    InvalidStatement(String),
    /// Two objects that must share a variable domain do not.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    /// Domain construction failed (too many variables, duplicate names, ...).
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    /// Rollback requested on a knowledge base with no snapshot.
    #[error("knowledge base has no snapshot to roll back to")]
    NoSnapshot,
    /// Edge insertion would create a directed cycle, or an edge list is cyclic.
    #[error("graph is not acyclic: {0}")]
    CyclicGraph(String),
    /// Graph arguments of mismatched size.
    #[error("graph size mismatch: {0}")]
    SizeMismatch(String),
    /// Invalid query arguments (overlapping sets, out-of-range nodes, ...).
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    /// Bayesian-network construction or validation failure.
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    /// Dataset validation failure.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    /// A line of a JSONL input failed to parse.
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    /// No solver executable is configured or the configured one is unusable.
    #[error("solver configuration: {0}")]
    SolverConfig(String),
    /// The solver ran but its output could not be interpreted.
    #[error("solver protocol: {message}; raw output: {raw:?}")]
    SolverProtocol { message: String, raw: String },
    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
