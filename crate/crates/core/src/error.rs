use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("computation error: {0}")]
    Computation(String),
    #[error("not enough original examples for attribute `{attribute}`: have {available}, need {requested}")]
    InsufficientPool {
        attribute: String,
        available: usize,
        requested: usize,
    },
    #[error("pool `{pool}` too small: {available} available, {requested} requested")]
    PoolTooSmall {
        pool: String,
        available: usize,
        requested: usize,
    },
}
