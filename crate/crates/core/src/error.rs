use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("column {0} has fewer than two observed entries")]
    UnidentifiableColumn(usize),

    #[error("row {0} has no observed entries")]
    EmptyRow(usize),

    #[error("sites {0} and {1} share the same coordinates")]
    DuplicateSites(usize, usize),

    #[error("non-finite covariate value at row {row}, column {col}")]
    NonFiniteCovariate { row: usize, col: usize },

    #[error("matrix has missing entries; impute before fitting this method")]
    NotComplete,

    #[error("requested {requested} knots but only {available} sites are available")]
    TooManyKnots { requested: usize, available: usize },

    #[error("knots {0} and {1} coincide")]
    DuplicateKnots(usize, usize),

    #[error("design matrix is degenerate: {0}")]
    CollinearDesign(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("design cross-product is numerically singular")]
    SingularDesign,

    #[error("spatial covariance matrix is not positive definite")]
    CovarianceSingular,

    #[error("kriging design is rank deficient or too wide for {0} sites")]
    RankDeficientDesign(usize),

    #[error("optimizer failed: {0}")]
    OptimFailed(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-positive mass at row {row}, column {col}")]
    NonpositiveMass { row: usize, col: usize },

    #[error("every covariate column was removed by the screening rules")]
    NoSurvivors,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
