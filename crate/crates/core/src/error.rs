use thiserror::Error;

use crate::cascade::CascadeResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    /// The cascade was still changing after `max_rounds`; the partial result
    /// is attached.
    #[error("cascade did not reach a fixed state within {rounds} rounds")]
    RoundLimit { rounds: usize, partial: Box<CascadeResult> },

    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("no included records for country `{country}` and year {year}")]
    EmptySelection { country: String, year: i32 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
