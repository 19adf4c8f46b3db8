use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("level index {index} out of range for {levels} quantization levels")]
    LevelOutOfRange { index: usize, levels: usize },
    #[error("invalid kappa vector: {0}")]
    InvalidKappa(String),
    #[error("enumeration too large: {count} compositions exceeds cap {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },
    #[error("non-monotone likelihood crossing: threshold {index} ({value}) falls below its predecessor")]
    NonMonotoneCrossing { index: usize, value: f64 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityDomain(f64),
    #[error("empty SNR grid")]
    EmptySnrGrid,
    #[error("compute budget exceeded: {required} evaluations requested, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),
    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),
    #[error("detector {0} is not supported here")]
    UnsupportedDetector(String),
}

impl Error {
    /// True for errors caused by a computation exceeding a configured size cap.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::EnumerationTooLarge { .. } | Error::BudgetExceeded { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
