use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Machine(#[from] dmm_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("shape violation: {0}")]
    Shape(String),
    #[error("algorithm {alg} cannot run on a {kind} instance")]
    KindMismatch { alg: &'static str, kind: &'static str },
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
