//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // hierarchy
    #[error("duplicate node identifier: {0}")]
    DuplicateNode(String),
    #[error("partition {0} is empty")]
    EmptyPartition(String),
    #[error("crossed leaf pair ({0}, {1}) is flagged empty but still listed")]
    UnprunedEmptyLeaf(String, String),
    #[error("constraint Gram matrix K K^T is numerically singular")]
    SingularConstraintGram,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the two partitions cover different household sets")]
    DisjointHouseholdSets,

    // standardize
    #[error("feature Gram matrix is numerically singular (min eigenvalue {0:.3e})")]
    SingularGram(f64),
    #[error("standardization window too short: {len} instants for {nodes} nodes")]
    WindowTooShort { len: usize, nodes: usize },
    #[error("unknown node: {0}")]
    UnknownNode(String),

    // aggregate
    #[error("ridge regularizer lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("pseudo-loss bound E must be positive, got {0}")]
    NonPositiveE(f64),
    #[error("vector is not in the simplex")]
    NotInSimplex,
    #[error("L1 norm {norm} exceeds ball radius {radius}")]
    L1RadiusExceeded { norm: f64, radius: f64 },
    #[error("observation delivered with no pending feature vector")]
    OutOfOrderObservation,
    #[error("hyper-parameter grid is empty")]
    EmptyGrid,

    // features
    #[error("training history too short for the requested lags")]
    InsufficientHistory,
    #[error("auto-regressive design matrix is collinear")]
    DegenerateDesign,
    #[error("training table is empty")]
    EmptyTraining,
    #[error("node {0} contains no households")]
    EmptyNode(String),
    #[error("feature file is missing node {0}")]
    MissingNode(String),
    #[error("gap or duplicate in half-hourly timestamps at {0}")]
    GapInTimestamps(String),

    // cluster
    #[error("household {0} has zero mean consumption")]
    ZeroMeanHousehold(String),
    #[error("NMF input contains negative entries")]
    NegativeInput,
    #[error("rank {r} exceeds min dimension {max}")]
    RankTooLarge { r: usize, max: usize },
    #[error("column {0} of W sums to zero")]
    ZeroColumn(usize),
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("partitions are over different item sets")]
    MismatchedSets,
    #[error("unknown attribute column: {0}")]
    UnknownColumn(String),

    // evaluate
    #[error("panels are misaligned (differing node order or horizon)")]
    MisalignedPanels,
    #[error("feature Gram over the run is singular")]
    SingularRunGram,
    #[error("hierarchy has no leaves")]
    NoLeaves,

    // pipeline
    #[error("invalid date range: {0}")]
    InvalidDateRange(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code per the CLI contract: 2 for configuration
    /// problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::NonPositiveLambda(_)
            | Error::NonPositiveE(_)
            | Error::EmptyGrid
            | Error::InvalidDateRange(_)
            | Error::RankTooLarge { .. }
            | Error::KTooLarge { .. }
            | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
