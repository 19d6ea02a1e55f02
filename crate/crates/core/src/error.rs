use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed factored tree: {0}")]
    Factoring(String),

    #[error("zero probability: {0}")]
    ZeroProbability(String),

    #[error("oracle budget exceeded after {steps} steps with {unexplored:e} unexplored mass")]
    OracleBudget { steps: u64, unexplored: f64 },

    #[error("yield mismatch: {0}")]
    YieldMismatch(String),

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("token {0:?} is outside the closed vocabulary")]
    OutOfVocabulary(String),

    #[error("model file line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error("model file version {found} is not supported (expected {expected})")]
    ModelVersion { found: String, expected: u32 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
