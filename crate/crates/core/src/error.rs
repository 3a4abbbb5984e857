use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pattern length {got} does not match expected length {expected}")]
    PatternLength { expected: usize, got: usize },

    #[error("invalid pattern character {0:?}; expected one of '0', '1', 'm'")]
    PatternChar(char),

    /// A DP table was asked about a variable outside its candidate set.
    #[error("pattern assigns {state} to node {node}, which is outside the candidate set")]
    OutsideCandidates { node: usize, state: &'static str },

    #[error("candidate set of size {size} exceeds the table cap of {cap}")]
    TableTooLarge { size: usize, cap: usize },

    #[error("non-finite local score for node {child} with parents {parents:?}")]
    NonFiniteScore { child: usize, parents: Vec<usize> },

    #[error("non-finite loss {loss} in {phase} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("conditional probability {value} outside [0, 1] while sampling parent {parent}")]
    InconsistentBackend { parent: usize, value: f64 },

    #[error("degenerate ground truth: {0}")]
    DegenerateTruth(&'static str),

    #[error("graph contains a directed cycle")]
    Cyclic,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
