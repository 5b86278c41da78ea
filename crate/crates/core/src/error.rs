use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// η² > Eε: the Hamiltonian is not bounded from below.
    #[error("stability condition violated: eta^2 = {eta_sq} > E*eps = {bound}")]
    Unstable { eta_sq: f64, bound: f64 },

    #[error("slot {slot} outside 1..={chain_len}")]
    SlotOutOfRange { slot: usize, chain_len: usize },

    #[error("step count {steps} outside {min}..={max}")]
    StepsOutOfRange { steps: usize, min: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("inadmissible covariance scalar {0} (must be >= 1)")]
    InadmissibleCovariance(f64),

    #[error("invalid subsystem selector: {0}")]
    InvalidSelector(String),

    #[error("|z| = {0} >= 1: the chain does not drive the system to a limit")]
    NoConvergence(f64),

    #[error("{0} requires finite inverse temperatures")]
    InfiniteTemperature(&'static str),

    #[error("dimension {dim} exceeds the oracle guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("displacement {norm} exceeds the cutoff headroom {limit}")]
    Headroom { norm: f64, limit: f64 },

    #[error("support violation: weight {weight:e} on the kernel of the reference state")]
    SupportViolation { weight: f64 },

    #[error("invalid mode subset: {0}")]
    InvalidSubset(String),

    #[error("invalid limit schedule: {0}")]
    InvalidSchedule(String),

    #[error("chain state fails the moment hypotheses: {0}")]
    MomentHypothesis(String),

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("malformed configuration: {0}")]
    Config(String),
}
