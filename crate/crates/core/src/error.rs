use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported Bernoulli polynomial order {0} (orders 0..=4 are available)")]
    UnsupportedOrder(u32),

    #[error("kernel input {value} lies outside [0,1]; rescale covariates first")]
    OutsideUnitInterval { value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariate column {column} is constant; min-max rescaling is undefined")]
    ConstantColumn { column: usize },

    #[error("empty input: {0}")]
    EmptyData(&'static str),

    #[error("no respondents in the sample (all response indicators are zero)")]
    NoRespondents,

    #[error("no nonrespondents in the sample; density ratio estimation needs both groups")]
    NoNonrespondents,

    #[error("non-finite outcome at respondent index {index}")]
    NonFiniteOutcome { index: usize },

    #[error("degenerate smoother: tr(Delta - A(lambda)) = {trace} <= 0")]
    DegenerateSmoother { trace: f64 },

    #[error("tuning grid is empty or contains non-positive entries")]
    InvalidGrid,

    #[error("linear predictor magnitude {magnitude:.3} exceeds the overflow guard (35)")]
    LinearPredictorOverflow { magnitude: f64 },

    #[error("density ratio fit failed to converge at every grid point")]
    AllFitsFailed,

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is rank deficient on respondents")]
    RankDeficient,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("more than 5% of replicates failed ({failed} of {total})")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
