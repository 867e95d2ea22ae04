use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the calculus, the models and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bivariate function must vanish on the diagonal, found {value} at t = {t}")]
    NonZeroDiagonal { t: usize, value: f64 },

    #[error("cumulative path is not a valid cumulative function at slot {slot}: {reason}")]
    InvalidPath { slot: usize, reason: String },

    #[error("causality violation at slot {slot}: departures {departures} exceed arrivals {arrivals}")]
    Causality {
        slot: usize,
        arrivals: f64,
        departures: f64,
    },

    #[error("theta = {theta} outside the MGF domain [0, {limit})")]
    MgfDomain { theta: f64, limit: f64 },

    #[error("state space truncation lost {lost:e} probability mass at t = {t}; enlarge the state cap (currently {cap})")]
    Truncation { t: usize, lost: f64, cap: usize },

    #[error("series has not converged: {0}")]
    NotConverged(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("trimming removed every sample path (epsilon = {epsilon}, paths = {paths})")]
    AllPathsRemoved { epsilon: f64, paths: usize },

    #[error("burst cap {cap} is too small: doubling it changes the estimate")]
    BurstCapTooSmall { cap: f64 },

    #[error("probe runner failed: {0}")]
    Probe(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
