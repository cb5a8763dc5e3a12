use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("non-finite loss for sample {sample}")]
    NonFiniteLoss { sample: usize },

    #[error("label {label} of sample {sample} is outside [0, {classes})")]
    Label { sample: usize, label: usize, classes: usize },

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("trace record {sample_id}: layer {layer} has {found} activations, header declares {expected}")]
    TraceRecord { sample_id: usize, layer: usize, expected: usize, found: usize },

    #[error("empty accumulator")]
    EmptyAccumulator,

    #[error("prune plan rejected: {0}")]
    Plan(String),

    #[error("selection would remove every filter of conv layer {layer}")]
    EmptiesLayer { layer: usize },

    #[error("unsupported topology: {0}")]
    Topology(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("no runs found in {0}")]
    NoRuns(PathBuf),

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Plan(_) | Error::EmptiesLayer { .. } | Error::Topology(_) => 2,
            Error::Data(_)
            | Error::Label { .. }
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::Truncated(_)
            | Error::LengthMismatch(_)
            | Error::Header(_)
            | Error::TraceRecord { .. }
            | Error::NoRuns(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
            Error::NonFiniteLoss { .. } | Error::EmptyAccumulator => 4,
            Error::Shape { .. } | Error::InvalidNetwork(_) => 1,
        }
    }
}
