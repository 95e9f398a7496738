use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mctg_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{dataset} row {row}: {message}")]
    Ingest { dataset: String, row: usize, message: String },
    #[error("service call `{tag}` failed: {message}")]
    Service { tag: String, message: String },
    #[error("replay miss for `{tag}`: fingerprint {fingerprint} not in cassette")]
    ReplayMiss { fingerprint: String, tag: String },
    #[error("record {record}: {source}")]
    Record {
        record: String,
        #[source]
        source: Box<Error>,
    },
    #[error("stage output {0} already exists; pass --resume to overwrite it")]
    OutputExists(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn for_record(self, record: impl Into<String>) -> Self {
        Error::Record { record: record.into(), source: Box::new(self) }
    }

    /// Stable machine-readable kind, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(
                mctg_core::Error::Config(_)
                | mctg_core::Error::InsufficientPool { .. }
                | mctg_core::Error::PoolTooSmall { .. },
            )
            | Error::Config(_) => "config",
            Error::Core(_) => "contract",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Ingest { .. } => "ingest",
            Error::Service { .. } => "service",
            Error::ReplayMiss { .. } => "replay_miss",
            Error::Record { source, .. } => source.kind(),
            Error::OutputExists(_) => "output_exists",
        }
    }

    /// Fingerprint of the missing cassette entry, if this is a replay miss.
    pub fn fingerprint(&self) -> Option<&str> {
        match self {
            Error::ReplayMiss { fingerprint, .. } => Some(fingerprint),
            Error::Record { source, .. } => source.fingerprint(),
            _ => None,
        }
    }
}
