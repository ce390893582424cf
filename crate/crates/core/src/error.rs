use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: width {w} and height {h} must both be positive and finite")]
    InvalidBox { w: f64, h: f64 },

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("stream order violated: frame {got} follows frame {prev}")]
    StreamOrder { prev: u64, got: u64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tile (col {col}, row {row}): {msg}")]
    Tile { col: u32, row: u32, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("appearance dimension mismatch: expected {expected}, got {got}")]
    AppearanceDim { expected: usize, got: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("histogram bin edges must be strictly ascending")]
    UnsortedEdges,

    #[error("average precision undefined: no ground truth")]
    UndefinedAp,

    #[error("no class has a defined average precision")]
    NoDefinedAp,

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
