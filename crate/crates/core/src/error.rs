use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("patch larger than cloud: k = {k}, N = {points}")]
    PatchLargerThanCloud { k: usize, points: usize },

    #[error("underdetermined normal: patch has {points} points, need at least 3")]
    UnderdeterminedNormal { points: usize },

    #[error("degenerate interpolation plane")]
    DegenerateInterpolationPlane,

    #[error("requested {requested} neighbors but only {available} are available")]
    TooManyNeighbors { requested: usize, available: usize },

    #[error("index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    #[error("index collision: slot {index} is mapped twice within one subgraph")]
    IndexCollision { index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("coverage violated: point {point} belongs to no patch")]
    CoverageViolated { point: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("oracle limit: dimension {dimension} exceeds {limit}")]
    OracleLimit { dimension: usize, limit: usize },

    #[error("not a combinatorial Laplacian: {0}")]
    NotLaplacian(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iteration {iteration}, stage `{stage}`: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, iteration: usize, stage: &'static str) -> Self {
        Error::Stage {
            iteration,
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
