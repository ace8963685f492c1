use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("reduction did not terminate within {0} steps")]
    ReductionStalled(usize),
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("sobolev degree {0} exceeds the supported maximum of 4")]
    DegreeTooLarge(usize),
    #[error("sieve limit {0} exceeds the memory guard")]
    SieveTooLarge(u64),
    #[error("decay fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("decay fit needs strictly positive values, got {0}")]
    NonPositiveError(f64),
    #[error("quadrature did not converge: last two estimates differ by {0:e}")]
    NotConverged(f64),
    #[error("{0}")]
    Invalid(&'static str),
    #[error("cannot parse `{0}`")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;
