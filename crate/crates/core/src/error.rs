use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel evaluated at t = {t} outside the tabulated range [0, {max}]")]
    OutOfRange { t: f64, max: f64 },

    #[error("time step {t_step} is coarser than the limit {limit} (tau_c / 4)")]
    StepTooCoarse { t_step: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("propagator crosses zero at grid index {index} (t = {t}); rates diverge there")]
    ZeroCrossing { index: usize, t: f64 },

    #[error("conditioning event has probability {probability:e}; conditional quantities are undefined")]
    ConditioningImpossible { probability: f64 },

    #[error("measurement branch has probability {probability:e}; cannot collapse")]
    ZeroProbabilityBranch { probability: f64 },

    #[error("channel map is not unitary on the supplied state (column overlap {overlap:e})")]
    NonUnitaryMap { overlap: f64 },

    #[error("complex propagator values (imaginary part {imag:e}) are outside the channel-map regime")]
    UnsupportedRegime { imag: f64 },

    #[error("internal consistency violated: {0}")]
    Inconsistent(String),

    #[error("all counts are zero; no data to estimate from")]
    NoData,

    #[error("kernel file: {0}")]
    KernelFile(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
