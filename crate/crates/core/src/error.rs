use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("unknown generator label `{0}`")]
    UnknownLabel(String),

    #[error("generator `{label}` and its declared inverse disagree by {residual:e}")]
    BadInverse { label: String, residual: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("capacity exceeded: {what} ({count} > {cap})")]
    Capacity { what: &'static str, count: usize, cap: usize },

    #[error("radius cap {cap} reached: worst point {worst_point}, achieved sum {achieved}")]
    RadiusCap { cap: usize, worst_point: f64, achieved: f64 },

    #[error("presentation error: {0}")]
    Presentation(String),

    #[error("syllable not representable: {0}")]
    Syllable(String),

    #[error("every element of the set fixes the base point")]
    AllStabilizing,

    #[error("graph error: {0}")]
    Graph(String),

    #[error("partition rejected: {0}")]
    Partition(String),

    #[error("expansion did not terminate within {0} steps")]
    NoTermination(usize),

    #[error("domain escape at step {step}: point {point} left the enlarged interval")]
    DomainEscape { step: usize, point: f64 },

    #[error("{what} differs by {residual:e} between witnesses `{first}` and `{second}`")]
    Inconsistent { what: &'static str, residual: f64, first: String, second: String },

    #[error("{0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
