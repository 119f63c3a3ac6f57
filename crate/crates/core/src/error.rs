use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("incompatible images: {0}")]
    IncompatibleImages(String),

    #[error("incompatible landmarks: {0}")]
    IncompatibleLandmarks(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("duplicate point at index {first} and {second}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible embeddings: dimension {left} vs {right}")]
    IncompatibleEmbeddings { left: usize, right: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("wrong auxiliary data kind: expected {expected}, got {actual}")]
    WrongAdKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("auxiliary data {0} was already bound to a reference")]
    AdReuse(String),

    #[error("internal ledger conflict on auxiliary data {0}")]
    LedgerConflict(String),

    #[error("enrollment unavailable: client {0} holds no unconsumed pseudonym")]
    EnrollmentUnavailable(String),

    #[error("pseudonym pool exhausted for client {0}")]
    PoolExhausted(String),

    #[error("protocol state error: {0}")]
    ProtocolState(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("leakage oracle exhausted after {0} queries")]
    OracleExhausted(u64),

    #[error("attack point {0} is not tapped")]
    UntappedAttackPoint(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidImage(_) => "invalid-image",
            Error::IncompatibleImages(_) => "incompatible-images",
            Error::IncompatibleLandmarks(_) => "incompatible-landmarks",
            Error::DegenerateInput(_) => "degenerate-input",
            Error::DuplicatePoint { .. } => "duplicate-point",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::IncompatibleEmbeddings { .. } => "incompatible-embeddings",
            Error::Config(_) => "config",
            Error::WrongAdKind { .. } => "wrong-ad-kind",
            Error::AdReuse(_) => "ad-reuse",
            Error::LedgerConflict(_) => "ledger-conflict",
            Error::EnrollmentUnavailable(_) => "enrollment-unavailable",
            Error::PoolExhausted(_) => "pool-exhausted",
            Error::ProtocolState(_) => "protocol-state",
            Error::ProtocolViolation(_) => "protocol-violation",
            Error::OracleExhausted(_) => "oracle-exhausted",
            Error::UntappedAttackPoint(_) => "untapped-attack-point",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
