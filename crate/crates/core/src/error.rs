use alloc::string::String;

/// Errors produced by the pure pipeline stages.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("timestamp regression at event {index}: {t} us after {prev} us")]
    TimeRegression { index: usize, prev: u64, t: u64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
