use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("utterance {utterance} references unknown speaker {speaker}")]
    DanglingReference { utterance: String, speaker: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),
    #[error("truncated audio file {0}")]
    TruncatedAudio(PathBuf),
    #[error("no artifact stored under key {0}")]
    MissingKey(String),
    #[error("artifact {key}: expected {expected}, found {found}")]
    VersionMismatch {
        key: String,
        expected: String,
        found: String,
    },
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mixed embedding profiles: {0} and {1}")]
    MixedProfiles(String, String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("speaker {speaker} has no {session} utterances")]
    MissingSession { speaker: String, session: String },
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Config(_) => ErrorKind::Usage,
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            path: PathBuf::new(),
            line,
            message: e.to_string(),
        }
    }
}
