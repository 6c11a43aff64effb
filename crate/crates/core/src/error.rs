use thiserror::Error;

use crate::graph::Vertex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("endpoint {vertex} out of range for graph on {n} vertices")]
    EndpointOutOfRange { vertex: u64, n: usize },

    #[error("self-loop on vertex {0}")]
    SelfLoop(Vertex),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(Vertex, Vertex),

    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid generator parameters: {0}")]
    Generator(String),

    #[error("random regular graph: no simple pairing after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("invalid value {value} for profile field `{field}`: {reason}")]
    InvalidOverride {
        field: String,
        value: f64,
        reason: &'static str,
    },

    #[error("unknown profile field `{0}`")]
    UnknownOverride(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Mpc(#[from] crate::mpc::MpcError),

    #[error("invalid matching: {0}")]
    InvalidMatching(#[from] crate::verify::MatchingViolation),

    #[error("exact oracle limited to {limit} vertices, got {n}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
