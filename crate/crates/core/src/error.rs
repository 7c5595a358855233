use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("reference text is empty after normalization")]
    EmptyReference,

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("image codec: {0}")]
    Codec(String),

    #[error("model: {0}")]
    Model(String),

    #[error("fixture miss: no replay entry for digest {digest}")]
    FixtureMiss { digest: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),

    #[error("no ground-truth boxes to evaluate")]
    NoGroundTruth,

    #[error("unknown sample id `{0}`")]
    UnknownSample(String),

    #[error("sample sets differ: {0:?}")]
    SampleSetMismatch(Vec<String>),

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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
