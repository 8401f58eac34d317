use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed WAV file {}: {msg}", path.display())]
    MalformedWav { path: PathBuf, msg: String },

    #[error("unsupported WAV encoding in {}: {msg}", path.display())]
    UnsupportedEncoding { path: PathBuf, msg: String },

    #[error("invalid STFT configuration: {0}")]
    InvalidStftConfig(String),

    #[error("inconsistent dimensions: {0}")]
    Dimension(String),

    #[error("invalid energy configuration: {0}")]
    InvalidEnergyConfig(String),

    #[error("energy source delivers no power; the device never powers on")]
    NeverPowersOn,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid frame ranges: {0}")]
    InvalidRanges(String),

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("external command failed: {0}")]
    ExternalCommand(String),

    #[error("unparseable metric output: {0}")]
    UnparseableOutput(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
