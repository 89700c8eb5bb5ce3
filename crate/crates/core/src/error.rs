use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} is outside the support of {dist}")]
    OutOfSupport { value: f64, dist: String },

    #[error("profile is empty")]
    EmptyProfile,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no active player in the round")]
    EmptyActiveSet,

    #[error("missing report for active player {0}")]
    MissingReport(usize),

    #[error(
        "transfers do not balance: sum of targets plus surplus {targets} differs from sum of anticipated payoffs {anticipated}"
    )]
    Imbalance { targets: f64, anticipated: f64 },

    #[error("no negative root: y = {y} is not below lambda = {lambda}")]
    NoNegativeRoot { y: f64, lambda: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not straddle the critical value")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("round {round} is beyond the horizon T = {horizon}")]
    RoundBeyondHorizon { round: usize, horizon: usize },

    #[error("linear program failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
