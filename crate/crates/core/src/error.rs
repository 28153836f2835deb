use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A configuration violates its invariants.
    InvalidConfig(String),
    /// An argument is outside its domain.
    InvalidArgument(String),
    /// Array shapes or channel counts do not line up.
    ShapeMismatch(String),
    /// The input is too small for the requested operation (valid padding).
    InputTooSmall(String),
    /// Not enough samples to compute the requested statistic.
    InsufficientData(String),
    /// The training loss became non-finite at the given step.
    TrainingDiverged { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InputTooSmall(msg) => write!(f, "input too small: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::TrainingDiverged { step } => {
                write!(f, "training diverged: loss became non-finite at step {step}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
