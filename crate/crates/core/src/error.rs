use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown domain id {0}")]
    UnknownDomain(usize),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("degenerate probe: {0}")]
    DegenerateProbe(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("checksum mismatch for {artifact}: expected {expected}, found {found}")]
    Checksum {
        artifact: String,
        expected: String,
        found: String,
    },

    #[error("{stage} failed for target {target}, repetition {repetition}: {source}")]
    Run {
        target: usize,
        repetition: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI for its error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NumericOverflow(_) => "numeric",
            Error::Undefined(_) => "undefined",
            Error::InvalidConfig(_) => "config",
            Error::UnknownDomain(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::DegenerateProbe(_) => "probe",
            Error::Format { .. } => "format",
            Error::SchemaVersion { .. } => "schema",
            Error::Checksum { .. } => "integrity",
            Error::Run { source, .. } => source.category(),
            Error::Io { .. } => "io",
            Error::Csv(_) => "format",
            Error::Json(_) => "format",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
