use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("separation r = {r} is at or below the scheme limit r_min = {r_min}")]
    DegenerateSeparation { r: f64, r_min: f64 },
    #[error("field-value block K is numerically singular (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{operation} did not converge: {detail}")]
    NonConvergence { operation: &'static str, detail: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
