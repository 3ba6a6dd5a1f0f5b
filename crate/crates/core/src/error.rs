use thiserror::Error;

use crate::adversary::InnerSolveResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("agent {agent}: point lies outside the uncertainty support")]
    Domain { agent: usize },

    #[error("agent index {0} out of range")]
    AgentIndex(usize),

    #[error("operation requires the linear-quadratic Cournot cost model")]
    NotCournot,

    #[error(
        "agent {agent}: inner maximization stopped after {} iterations with distance certificate {:e}",
        .best.iterations_used,
        .best.distance_certificate
    )]
    InnerNotConverged {
        agent: usize,
        best: Box<InnerSolveResult>,
    },

    #[error("model constants unavailable: {0}")]
    MissingConstants(String),

    #[error("non-finite gradient for agent {agent} at iteration {iteration}")]
    NonFiniteGradient { agent: usize, iteration: usize },

    #[error("solver failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle stopped after {iterations} iterations with residual {residual:e}")]
    OracleNotConverged { iterations: usize, residual: f64 },

    #[error("invalid game: {}", .0.join("; "))]
    InvalidGame(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input")]
    EmptyInput,

    #[error("no reference equilibrium was supplied")]
    MissingReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
