use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("unknown {kind} {value:?}")]
    UnknownVariant { kind: &'static str, value: String },
    #[error("{0}")]
    OutOfRange(String),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{0} must not be empty")]
    Empty(&'static str),
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed timestamp {token:?}: {reason}")]
    Timestamp { token: String, reason: &'static str },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing static key {0:?}")]
    MissingKey(&'static str),
    #[error("cannot build samples: {0}")]
    Samples(String),
}

impl AnnotationError {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        AnnotationError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl InputError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        InputError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        InputError::Record {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        InputError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TapError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("expected {expected} frames, got {actual}")]
    FrameCount { expected: usize, actual: usize },
    #[error("shape mismatch in {layer}: {message}")]
    Shape { layer: String, message: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("missing frame {0} in frame store")]
    MissingFrame(u64),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TapError {
    pub(crate) fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        TapError::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("expected {expected} history states, got {actual}")]
    HistoryCount { expected: usize, actual: usize },
    #[error("too many images: {actual} > {max}")]
    TooManyImages { max: usize, actual: usize },
    #[error("image encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("reply is missing fields: {}", .0.join(", "))]
    MissingFields(Vec<&'static str>),
}

/// Failure of a full request/parse exchange with the backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable reply after retry: {0}")]
    Parse(#[from] ResponseError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("frame {index} at {timestamp_ms} ms is not after the previous frame at {previous_ms} ms")]
    OutOfOrder {
        index: u64,
        timestamp_ms: u64,
        previous_ms: u64,
    },
    #[error("no frames yet")]
    NoFrames,
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Tap(#[from] TapError),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("evaluation batch is empty")]
    EmptyBatch,
    #[error("length mismatch: {predictions} predictions vs {ground_truth} ground-truth labels")]
    LengthMismatch {
        predictions: usize,
        ground_truth: usize,
    },
    #[error("n-gram order must be at least 1, got {0}")]
    NGramOrder(usize),
    #[error("pair {0:?} has an empty reference")]
    EmptyReference(String),
    #[error("{0} must not be empty")]
    EmptyText(&'static str),
    #[error("cannot build judge prompt: {0}")]
    Prompt(String),
}
