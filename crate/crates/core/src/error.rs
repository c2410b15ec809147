use thiserror::Error;

/// Errors produced by the inference toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("count trace is empty")]
    EmptyTrace,

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("steps per interval must be a power of two, got {0}")]
    NotPowerOfTwo(u32),

    #[error("brute-force enumeration refused for N = {len} (limit {limit})")]
    TooLarge { len: usize, limit: usize },

    #[error("count {count} exceeds truncation bound c_max = {c_max}")]
    CountBeyondTruncation { count: u32, c_max: usize },

    #[error(
        "truncation bound c_max = {c_max} too small: Poisson tail {tail:e} exceeds tolerance; need c_max >= {required}"
    )]
    InsufficientTruncation { c_max: usize, required: usize, tail: f64 },

    #[error("quadrature with {nodes} nodes not converged: relative change {change:e} at count {count} (tolerance {tolerance:e})")]
    QuadratureNotConverged {
        nodes: usize,
        count: u32,
        change: f64,
        tolerance: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("credible level {0} outside (0, 1)")]
    InvalidLevel(f64),

    #[error("duration histogram is degenerate ({occupied} occupied bin(s)); try a different binning")]
    DegenerateHistogram { occupied: usize },

    #[error("count histogram is not bimodal; rule `{0}` is unavailable")]
    Unimodal(&'static str),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
