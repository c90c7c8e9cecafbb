use std::path::PathBuf;

/// Errors produced by the encryption, analysis and pipeline layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("degenerate logistic orbit: iterate {iteration} reached {value}")]
    DegenerateOrbit { iteration: usize, value: f64 },

    #[error("invalid segment statistics: mean={mean}, std_dev={std_dev}")]
    InvalidStatistics { mean: f64, std_dev: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("spectral flatness undefined for an all-zero signal")]
    UndefinedFlatness,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingest { line: u64, message: String },

    #[error("no key stored for key id {0}")]
    MissingKey(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("store error: {0}")]
    Store(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
