//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("index {what}={index} outside 1..={max}")]
    Index { what: &'static str, index: usize, max: usize },

    #[error("quadrature tolerance not met after {subdivisions} subdivisions (estimate {estimate:e}, error {error:e})")]
    ToleranceNotMet { estimate: f64, error: f64, subdivisions: usize },

    #[error("signal power or channel gain is zero for gNB {k}, P-User {m}")]
    ZeroPower { k: usize, m: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("KKT bracket is not positive ({bracket:e}) for gNB {k}, P-User {m}")]
    InactiveBracket { k: usize, m: usize, bracket: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("allocation did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, max: usize) -> Result<usize> {
    if index == 0 || index > max {
        Err(Error::Index { what, index, max })
    } else {
        Ok(index - 1)
    }
}
