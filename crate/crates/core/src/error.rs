use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("duplicate language id `{0}`")]
    DuplicateLanguage(String),

    #[error("duplicate clip id `{clip_id}` in language `{lang_id}`")]
    DuplicateClip { lang_id: String, clip_id: String },

    #[error("language `{0}` has no clips")]
    NoClips(String),

    #[error("language `{0}` is missing")]
    MissingLanguage(String),

    #[error("bad magic: expected EMB1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("row count mismatch for `{lang_id}`: {clips} clips but {rows} embedding rows")]
    RowCountMismatch {
        lang_id: String,
        clips: usize,
        rows: usize,
    },

    #[error("audio has {0} channels; only mono is supported")]
    NonMono(u16),

    #[error("unsupported WAV codec (format {format}, {bits} bits)")]
    UnsupportedCodec { format: u16, bits: u16 },

    #[error("sample rate {found} Hz; expected {expected} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },

    #[error("clip is silent (RMS below 1e-8)")]
    SilentClip,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True for failures of the underlying file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
