use thiserror::Error;

/// Failures raised by model construction and the decision procedures.
///
/// A cemetery state is a modeled outcome, never an error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("input error: {0}")]
    Input(String),
    /// The model lacks something an operation needs (e.g. probabilities).
    #[error("configuration error: {0}")]
    Config(String),
    /// An enumeration would exceed its cap.
    #[error("capacity error: {what} requires {required} items, cap is {cap}")]
    Capacity {
        what: String,
        required: u128,
        cap: u128,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
