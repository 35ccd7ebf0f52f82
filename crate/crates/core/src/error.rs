use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid puzzle state: {0}")]
    InvalidState(String),

    #[error("illegal move {mv:?}: blank at cell {blank} would leave the board")]
    IllegalMove { mv: crate::puzzle::Move, blank: usize },

    #[error("permutation rank {0} out of range [0, 362880)")]
    RankOutOfRange(usize),

    #[error("state {0} is not reachable from the table's goal")]
    UnreachableState(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("all-zero evidence message at tree node {node}: the evidence contradicts the model")]
    AllZeroMessage { node: usize },

    #[error("joint enumeration needs {needed} assignments, cap is {cap}")]
    CapExceeded { needed: f64, cap: u64 },

    #[error("no reachable state is at least {horizon} moves from the goal (maximum is {max})")]
    EmptyEligibleSet { horizon: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
