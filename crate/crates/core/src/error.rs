// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph contains a cycle")]
    CyclicGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("missing prior entry for node {node}, configuration {config}")]
    MissingPriorEntry { node: usize, config: usize },

    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("t must be positive and finite, got {0}")]
    InvalidT(f64),

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("prior parameter {value} is below 2 at node {node}, configuration {config}")]
    PriorTooSmall { node: usize, config: usize, value: f64 },

    #[error("missing posterior entry for node {node}, configuration {config}")]
    MissingPosteriorEntry { node: usize, config: usize },

    #[error("missing Fourier coefficient for index {0:#x}")]
    MissingCoefficient(u64),

    #[error("non-positive posterior parameter {value} at node {node}, configuration {config}")]
    NonPositivePosteriorParam { node: usize, config: usize, value: f64 },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("trimming level omega = {omega} is at least 1/2 (epsilon = {epsilon})")]
    OmegaTooLarge { omega: f64, epsilon: f64 },

    #[error("level set is empty")]
    EmptyLevelSet,

    #[error("linear system is not symmetric positive-definite")]
    SingularSystem,

    #[error("rejection sampler exhausted {0} attempts")]
    RejectionBudgetExhausted(usize),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
