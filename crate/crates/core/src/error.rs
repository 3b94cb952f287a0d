use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed RIFF/WAVE data: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: format tag {format_tag}, {bits_per_sample} bits")]
    UnsupportedEncoding { format_tag: u16, bits_per_sample: u16 },

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("unknown class label {0:?}")]
    UnknownClassLabel(String),

    #[error("unknown speaking task {0:?}")]
    UnknownTask(String),

    #[error("duplicate (speaker_id, utterance_id) pair ({speaker_id}, {utterance_id})")]
    DuplicateUtterance { speaker_id: String, utterance_id: String },

    #[error("conflicting class for speaker {speaker_id}: {first} vs {second}")]
    ConflictingClass { speaker_id: String, first: String, second: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("mel filter {index} is empty at this frequency resolution")]
    EmptyFilter { index: usize },

    #[error("invalid SFF configuration: {0}")]
    InvalidSffConfig(String),

    #[error("time {time_s} s is outside the signal (duration {duration_s} s)")]
    TimeOutOfRange { time_s: f64, duration_s: f64 },

    #[error("SMO solver did not converge after {iterations} iterations (KKT violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("dimension mismatch: model expects {expected}, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("sample rate mismatch: {first} Hz vs {other} Hz ({path})")]
    MixedSampleRates { first: u32, other: u32, path: String },

    #[error("held-out speaker {0} leaked into the training set")]
    Leakage(String),

    #[error("{count} file(s) failed during extraction; first: {first}")]
    Extraction { count: usize, first: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
