use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("domain mismatch: {0}")]
    Domain(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("configuration rejected: {0}")]
    Rejected(String),
    #[error("eigensolver did not converge (max residual {residual:.3e}): {detail}")]
    NoConvergence { residual: f64, detail: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("reflection contamination at T = {time}: boundary mass fraction {fraction:.3e}")]
    Contaminated { time: f64, fraction: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
