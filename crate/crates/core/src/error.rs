use thiserror::Error;

/// Errors produced by the multiview library.
#[derive(Debug, Error)]
pub enum Error {
    /// A line in an edge-list file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input was empty where content is required.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// The two views share no node labels.
    #[error("no shared nodes between the two views")]
    NoSharedNodes,

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Generator parameters admit no valid model.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// A community label is outside 0..K.
    #[error("label {label} out of range for K = {k}")]
    LabelOutOfRange { label: usize, k: usize },

    /// Dimensions of two inputs do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The eigensolver did not converge.
    #[error("eigensolver failed to converge (n = {n}, max sweeps = {max_iter})")]
    EigenFailure { n: usize, max_iter: usize },

    /// A computation produced a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Sinkhorn balancing did not reach tolerance.
    #[error("sinkhorn balancing did not converge: max marginal violation {violation:.3e} after {iterations} iterations")]
    SinkhornNonConvergence { violation: f64, iterations: usize },

    /// An EM fit failed irrecoverably.
    #[error("EM failure: {0}")]
    EmFailure(String),

    /// A permutation replicate failed inside a test.
    #[error("permutation replicate {replicate} failed: {source}")]
    ReplicateFailure {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
