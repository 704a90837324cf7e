use thiserror::Error;

use crate::linalg::DominantPair;

pub type Result<T> = std::result::Result<T, BssError>;

#[derive(Debug, Error)]
pub enum BssError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("power iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        last: Box<DominantPair>,
    },

    #[error("solver aborted at iteration {iteration}: {reason}")]
    SolverAbort { iteration: usize, reason: String },

    #[error("degenerate loading: {0}")]
    DegenerateLoading(String),

    #[error("degenerate score: {0}")]
    DegenerateScore(String),

    #[error("singular matrix C'U (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("exhaustive search refused: p = {p} exceeds the limit of {limit}")]
    Guard { p: usize, limit: usize },

    #[error("component {h}: {source}")]
    Component {
        h: usize,
        #[source]
        source: Box<BssError>,
    },
}

impl BssError {
    pub fn dimension(msg: impl Into<String>) -> Self {
        BssError::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        BssError::InvalidConfig(msg.into())
    }

    /// Strips any `Component` wrappers.
    pub fn root(&self) -> &BssError {
        match self {
            BssError::Component { source, .. } => source.root(),
            other => other,
        }
    }
}
