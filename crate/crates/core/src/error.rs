use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("series too short: need at least {min} observations, got {got}")]
    TooShort { min: usize, got: usize },

    #[error("non-finite latent state at position {0}")]
    NonFinite(usize),

    #[error("site index {index} out of range for a series of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("expected intensity exp(z) = {value:e} exceeds the cap of {cap:e}")]
    IntensityOverflow { value: f64, cap: f64 },

    #[error("argument {0} is below the branch point -1/e of Lambert W")]
    LambertDomain(f64),

    #[error("accept-reject gave up after {attempts} attempts ({context})")]
    EnvelopeFailure { attempts: u64, context: &'static str },

    #[error("series has zero sample variance")]
    ZeroVariance,

    #[error("all counts are zero")]
    AllZeroCounts,

    #[error("importance weights degenerate: {0}")]
    DegenerateWeights(String),

    #[error("length mismatch: {0} latent states vs {1} observations")]
    LengthMismatch(usize, usize),

    #[error("level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("chain is constant; autocorrelation undefined")]
    ConstantChain,

    #[error("chain of length {len} too short for lag {max_lag}")]
    ChainTooShort { len: usize, max_lag: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("initialization failed: {0}")]
    Initialization(Box<Error>),
}

pub type Result<T> = std::result::Result<T, Error>;
