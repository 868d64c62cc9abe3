use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no root of E[rho^s] = 1 in the search bracket: {0}")]
    NoRoot(String),
    #[error("moment integral diverges at s = {0}")]
    Divergent(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("lattice environment: log rho values are commensurate")]
    Lattice,
    #[error("custom model self-test failed: {0}")]
    CustomMismatch(String),
    #[error("kappa override {given} disagrees with solved value {solved}")]
    KappaOverride { given: f64, solved: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("window too small to certify the truncated left sum")]
    WindowTooSmall,
    #[error("n = {0} is too small (need n >= 3)")]
    TooSmall(u64),
    #[error("need {needed} complete excursions, have {available}")]
    InsufficientExcursions { needed: u64, available: u64 },
    #[error("truncated tail could not be certified")]
    TruncationUncertified,
    #[error("degenerate valley with e1 = {0} (need e1 >= 2)")]
    DegenerateValley(i64),
    #[error("site {0} lies outside the environment window")]
    OutOfWindow(i64),
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("method unavailable: {0}")]
    MethodUnavailable(String),
    #[error("numerical check failed: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
