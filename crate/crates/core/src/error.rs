use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("agent count mismatch: environment has {env}, policies have {policies}")]
    AgentCountMismatch { env: usize, policies: usize },

    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },

    #[error("diversity is undefined for fewer than two agents (got {0})")]
    TooFewAgents(usize),

    #[error("empty rollout batch")]
    EmptyBatch,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("malformed distance matrix: {0}")]
    MalformedMatrix(String),

    #[error("invalid proportions: {0}")]
    InvalidProportions(String),

    #[error("cluster count {clusters} does not divide agent count {agents}")]
    ClustersDoNotDivide { agents: usize, clusters: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
