use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequency {lambda} outside [-pi, pi]")]
    FrequencyDomain { lambda: f64 },

    #[error("spectral density has a pole at lambda = 0 for d = {d}")]
    SpectralPole { d: f64 },

    #[error("size {size} exceeds limit {limit} for {what}")]
    SizeLimit {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("circulant embedding not nonnegative (min eigenvalue {min_eigen:e}) and Cholesky fallback failed: {reason}")]
    Sampling { min_eigen: f64, reason: String },

    #[error("missing Fourier coefficient for frequency m = {m}")]
    MissingFrequency { m: i64 },

    #[error("grid size {grid} too small: must be a power of two and at least {required}")]
    GridTooSmall { grid: usize, required: usize },

    #[error("channel point u = {u} outside the kernel domain: {reason}")]
    KernelDomain { u: f64, reason: String },

    #[error("kernel table has no entry for m = {m}, channel {channel}")]
    MissingTableEntry { m: i64, channel: usize },

    #[error("ill-posed frequency m = {m}: tau_1 = {tau1:e}")]
    IllPosed { m: i64, tau1: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient levels: {0}")]
    InsufficientLevels(String),

    #[error("operation not available in the {regime} regime: {what}")]
    Regime { regime: &'static str, what: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
