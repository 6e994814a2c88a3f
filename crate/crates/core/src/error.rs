use std::io;
use std::path::PathBuf;

use crate::corpus::SentenceId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by frontends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, files or parameters.
    Data,
    /// A translation backend failed or violated the wire protocol.
    Backend,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: no usable lines", path.display())]
    NoUsableLines { path: PathBuf },

    #[error("line-count mismatch {source_lines} vs {target_lines}")]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },

    #[error("empty {side} side on line {line}")]
    EmptySide { line: usize, side: &'static str },

    #[error("malformed dictionary line {line}: expected 2 tab-separated columns, found {columns}")]
    MalformedDictionaryLine { line: usize, columns: usize },

    #[error("pool has {0} sentence(s); at least 2 are needed to split")]
    PoolTooSmall(usize),

    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),

    #[error("empty sentence")]
    EmptySentence,

    #[error("dangling continuation marker at end of sentence")]
    DanglingContinuation,

    #[error("invalid interpolation weights: {0}")]
    InvalidLambda(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("non-finite score {score} for sentence {id}")]
    NonFiniteScore { id: SentenceId, score: f64 },

    #[error("strategy unavailable: {0}")]
    StrategyUnavailable(String),

    #[error("oracle has no reference for {} pool sentence(s), first missing ids: {:?}", missing.len(), &missing[..missing.len().min(10)])]
    OracleCoverage { missing: Vec<SentenceId> },

    #[error("hypothesis/reference count mismatch {hypotheses} vs {references}")]
    CountMismatch {
        hypotheses: usize,
        references: usize,
    },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("scoring length mismatch: expected {expected} log-probabilities, got {got}")]
    ScoringLengthMismatch { expected: usize, got: usize },

    #[error("scoring aborted after {scored} of {total} sentences: {source}")]
    ScoringAborted {
        scored: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Backend(_) | Error::Protocol(_) | Error::ScoringLengthMismatch { .. } => {
                ErrorKind::Backend
            }
            Error::ScoringAborted { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
