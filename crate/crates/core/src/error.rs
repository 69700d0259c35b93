use thiserror::Error;

/// Errors raised by the filter updates, the oracle and the model constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("predicted intensity has zero total mass")]
    EmptyIntensity,

    #[error("measurement set has zero probability under the model")]
    ZeroEvidence,

    #[error("clutter density vanishes at measurement {index}")]
    ZeroClutterDensity { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid cardinality distribution: {0}")]
    InvalidCardinality(String),

    #[error("invalid particle weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("enumeration budget exceeded: {required} configurations > {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
