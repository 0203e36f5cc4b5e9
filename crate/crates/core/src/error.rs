use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty reference set")]
    EmptyReference,
    #[error("undefined metric: both point sets must be non-empty")]
    UndefinedMetric,
    #[error("degenerate bearing: point lies on the radar axis origin")]
    DegenerateBearing,
    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),
    #[error("time {t} s outside trajectory span [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("frames out of order: {earlier} s is not before {later} s")]
    OutOfOrder { earlier: f64, later: f64 },
    #[error("cannot sample {requested} points from a cloud of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("ill-conditioned kernel: Cholesky failed with jitter up to {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
