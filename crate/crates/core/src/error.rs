use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("no fitting points")]
    NoFittingPoints,

    #[error("multiple base rows")]
    MultipleBaseRows,

    #[error("asset column must be present for all points or none")]
    PartialAssets,

    #[error("unknown method tag `{0}`")]
    UnknownMethod(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("rank deficient design: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },

    #[error("degenerate perfect fit (zero residual sum of squares)")]
    DegenerateFit,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite iterate: {0}")]
    NonFiniteIterate(String),

    #[error("value outside the link/family domain: {0}")]
    Domain(String),

    #[error("degenerate smooth argument (zero range)")]
    DegenerateSmooth,

    #[error("empty neighborhood: all kernel weights are zero")]
    EmptyNeighborhood,

    #[error("degenerate normalization (zero denominator)")]
    DegenerateNormalization,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("newton iteration diverged: {0}")]
    Divergence(String),

    #[error("no admissible candidate could be fitted: {0}")]
    NoCandidate(String),

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
