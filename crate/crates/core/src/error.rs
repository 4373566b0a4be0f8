use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("training diverged ({0})")]
    TrainingDiverged(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("not a bitstream (bad magic or version)")]
    NotABitstream,

    #[error("codebook mismatch: stream references {expected:016x}, supplied codebook is {actual:016x}")]
    CodebookMismatch { expected: u64, actual: u64 },

    #[error("field overflow while packing: {0}")]
    EncodeOverflow(String),

    #[error("no voiced speech found")]
    NoVoicedSpeech,

    #[error("segment too short: {0} samples, need at least 2")]
    SegmentTooShort(usize),

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("invalid drive signal: non-finite value at sample {0}")]
    InvalidDrive(usize),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("no syllables")]
    NoSyllables,

    #[error("config error: {message}{}", path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    Config { message: String, path: Option<PathBuf> },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(expected: usize, actual: usize) -> Self {
        Error::Dimension { expected, actual }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
            path: None,
        }
    }

    pub fn config_path(message: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Error::Config {
            message: message.into(),
            path: Some(path.into()),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 config, 2 input signal, 3 stream integrity, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) | Error::Json(_) | Error::Dimension { .. } => 1,
            Error::NoVoicedSpeech
            | Error::TooShort(_)
            | Error::SegmentTooShort(_)
            | Error::InvalidDrive(_)
            | Error::NoSyllables
            | Error::Wav(_) => 2,
            Error::CorruptStream(_)
            | Error::NotABitstream
            | Error::CodebookMismatch { .. }
            | Error::EncodeOverflow(_) => 3,
            Error::TrainingDiverged(_) | Error::EmptyCorpus | Error::DegenerateCorpus(_) => 4,
        }
    }
}
