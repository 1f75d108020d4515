use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed graph: {reason}{}", edge.map(|(t, h)| format!(" at edge ({t}, {h})")).unwrap_or_default())]
    MalformedGraph {
        reason: String,
        edge: Option<(usize, usize)>,
    },

    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid loading factor: lambda = {lambda}, lambda_star = {lambda_star}")]
    InvalidLoadingFactor { lambda: f64, lambda_star: f64 },

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("invalid gamma: {0}")]
    InvalidGamma(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("enumeration budget exceeded: {constraints} constraints (limit {limit})")]
    BudgetExceeded { constraints: usize, limit: usize },

    #[error("epsilon did not stabilize above {floor:e}")]
    NoStabilization { floor: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("tie analysis inapplicable: {0}")]
    Inapplicable(String),

    #[error("invalid edge id {0}")]
    InvalidEdge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
