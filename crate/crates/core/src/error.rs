use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate immersion at node {node} (rho index {i_rho}, theta index {i_theta}): {what}")]
    Degenerate {
        node: usize,
        i_rho: usize,
        i_theta: usize,
        what: &'static str,
    },

    #[error("assumption 1 violated: {0}")]
    AssumptionViolated(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("regular value violation: {0}")]
    NotRegular(String),

    #[error("fit refused: {0}")]
    Fit(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
