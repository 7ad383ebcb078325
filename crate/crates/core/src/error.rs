use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid edge weight {weight} on line {line}")]
    InvalidWeight { line: usize, weight: f64 },

    #[error("invalid stubbornness {value} for node index {node}")]
    InvalidStubbornness { node: usize, value: f64 },

    #[error("opinion {value} for node {node} outside [-1, 1]")]
    OpinionOutOfRange { node: String, value: f64 },

    #[error("unknown node id {0}")]
    UnknownNode(u64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense path refused: n = {n} exceeds cap {cap}")]
    SizeGuard { n: usize, cap: usize },

    #[error("enumeration refused: {0}")]
    EnumerationGuard(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration cap of {cap} reached: {context}")]
    IterationCap { cap: usize, context: String },

    #[error("{}: {source}", path.display())]
    File { path: std::path::PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 for input errors, 2 for numerical failures,
    /// 3 for size guards.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SizeGuard { .. } | Error::EnumerationGuard(_) => 3,
            Error::Numerical(_) | Error::IterationCap { .. } => 2,
            _ => 1,
        }
    }
}
