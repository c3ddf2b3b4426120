//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("quadrature did not converge (achieved {achieved:.3e}, wanted {wanted:.3e})")]
    Quadrature { achieved: f64, wanted: f64 },
    #[error("grid too coarse: trace {trace} vs expected {expected}")]
    GridTooCoarse { trace: f64, expected: f64 },
    #[error("subsequence exhausted: found {found} of {wanted} members below {cap}")]
    Exhausted { found: usize, wanted: usize, cap: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
