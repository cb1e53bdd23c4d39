use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants are grouped by [`Error::is_validation`] into input/config problems
/// (exit status 1 on the command line) and runtime failures (exit status 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error in {context}: field `{field}`: {reason}")]
    Schema {
        context: String,
        field: String,
        reason: String,
    },

    #[error("frame {index} ({path}): {reason}")]
    Frame {
        index: usize,
        path: PathBuf,
        reason: String,
    },

    #[error("landmark track has {landmarks} frames but the video has {frames}")]
    LandmarkMismatch { landmarks: usize, frames: usize },

    #[error("degenerate face region: {0}")]
    DegenerateRegion(String),

    #[error("insufficient context: need {needed} frames, session has {available}")]
    InsufficientContext { needed: usize, available: usize },

    #[error("clip frames {start}..{end} hold no STFT window center (centers span {first}..{last})")]
    NoWindowCenter {
        start: usize,
        end: usize,
        first: usize,
        last: usize,
    },

    #[error("no valid source heart rate: every STFT window covering the clip is masked")]
    NoSourceHr,

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),

    #[error("signal too short: need {needed} samples, have {available}")]
    TooShort { needed: usize, available: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("no jointly valid windows")]
    NoValidWindows,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("chunk starting at {start}: {reason}")]
    Chunk { start: usize, reason: String },

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("session `{session}`: {source}")]
    Session {
        session: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        context: impl Into<String>,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Schema {
            context: context.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Wraps this error with the id of the session it occurred in.
    pub fn in_session(self, session: impl Into<String>) -> Self {
        Error::Session {
            session: session.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input or configuration rather than by
    /// the computation itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::Schema { .. }
            | Error::Frame { .. }
            | Error::LandmarkMismatch { .. }
            | Error::Chunk { .. }
            | Error::Json { .. }
            | Error::Csv(_)
            | Error::Empty(_)
            | Error::NoWindowCenter { .. } => true,
            Error::Session { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
